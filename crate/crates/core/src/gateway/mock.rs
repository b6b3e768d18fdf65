use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{AgentRole, ChatProvider, ChatRequest, ChatResponse, GatewayError, TokenUsage, Transcript};

/// Chat provider that answers from per-role FIFO queues.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    queues: Mutex<BTreeMap<AgentRole, VecDeque<ChatResponse>>>,
}

/// On-disk script: the replies each agent role receives, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub replies: BTreeMap<AgentRole, Vec<String>>,
}

impl MockScript {
    pub fn push(&mut self, role: AgentRole, text: impl Into<String>) -> &mut Self {
        self.replies.entry(role).or_default().push(text.into());
        self
    }
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl ScriptedChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_script(script: &MockScript) -> Self {
        let chat = Self::new();
        for (role, replies) in &script.replies {
            for r in replies {
                chat.push(*role, r.clone());
            }
        }
        chat
    }

    /// Replays the responses a transcript recorded, keeping their metadata.
    pub fn from_transcript(transcript: &Transcript) -> Self {
        let chat = Self::new();
        let mut queues = chat.queues.lock().expect("queue lock");
        for (role, responses) in transcript.replies_by_role() {
            queues.insert(role, responses.into());
        }
        drop(queues);
        chat
    }

    /// Parses either a [`MockScript`] or a recorded [`Transcript`].
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("entries").is_some() {
            let t: Transcript = serde_json::from_value(value)?;
            Ok(Self::from_transcript(&t))
        } else {
            let s: MockScript = serde_json::from_value(value)?;
            Ok(Self::from_script(&s))
        }
    }

    pub fn push(&self, role: AgentRole, text: impl Into<String>) {
        let text = text.into();
        let response = ChatResponse {
            usage: TokenUsage {
                prompt_tokens: 0,
                completion_tokens: word_count(&text),
            },
            text,
            latency_ms: 0,
        };
        self.queues
            .lock()
            .expect("queue lock")
            .entry(role)
            .or_default()
            .push_back(response);
    }

    pub fn remaining(&self, role: AgentRole) -> usize {
        self.queues
            .lock()
            .expect("queue lock")
            .get(&role)
            .map_or(0, VecDeque::len)
    }
}

impl ChatProvider for ScriptedChat {
    fn complete(&self, agent: AgentRole, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut queues = self.queues.lock().expect("queue lock");
        let mut response = queues
            .get_mut(&agent)
            .and_then(VecDeque::pop_front)
            .ok_or(GatewayError::ScriptExhausted(agent))?;
        if response.usage.prompt_tokens == 0 {
            response.usage.prompt_tokens = request.messages.iter().map(|m| word_count(&m.content)).sum();
        }
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    fn req() -> ChatRequest {
        ChatRequest::new("mock", vec![Message::user("hello there")])
    }

    #[test]
    fn queues_are_per_role_fifo() {
        let chat = ScriptedChat::new();
        chat.push(AgentRole::Seeker, "a,b");
        chat.push(AgentRole::Innovator, "x");
        chat.push(AgentRole::Seeker, "c");
        assert_eq!(chat.complete(AgentRole::Seeker, &req()).unwrap().text, "a,b");
        assert_eq!(chat.complete(AgentRole::Seeker, &req()).unwrap().text, "c");
        assert_eq!(chat.complete(AgentRole::Innovator, &req()).unwrap().text, "x");
        assert_eq!(
            chat.complete(AgentRole::Seeker, &req()),
            Err(GatewayError::ScriptExhausted(AgentRole::Seeker))
        );
    }

    #[test]
    fn script_json_round_trips() {
        let mut script = MockScript::default();
        script.push(AgentRole::Executor, "```solidity\ncontract A {}\n```");
        let json = serde_json::to_string(&script).unwrap();
        assert!(json.contains("\"executor\""));
        let chat = ScriptedChat::from_json(&json).unwrap();
        assert_eq!(chat.remaining(AgentRole::Executor), 1);
        assert_eq!(chat.remaining(AgentRole::Seeker), 0);
    }
}
