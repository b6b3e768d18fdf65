use std::collections::{BTreeMap, HashMap, HashSet};

use alloy_primitives::{keccak256, Address, Bytes, B256, U256};

/// Keccak-256 of the empty byte string.
pub const KECCAK_EMPTY: B256 = B256::new([
    0xc5, 0xd2, 0x46, 0x01, 0x86, 0xf7, 0x23, 0x3c, 0x92, 0x7e, 0x7d, 0xb2, 0xdc, 0xc7, 0x03, 0xc0,
    0xe5, 0x00, 0xb6, 0x53, 0xca, 0x82, 0x27, 0x3b, 0x7b, 0xfa, 0xd8, 0x04, 0x5d, 0x85, 0xa4, 0x70,
]);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Account {
    pub balance: U256,
    pub nonce: u64,
    pub code: Bytes,
    pub storage: BTreeMap<U256, U256>,
}

impl Account {
    /// EIP-161 emptiness: no code, zero nonce, zero balance.
    pub fn is_empty(&self) -> bool {
        self.code.is_empty() && self.nonce == 0 && self.balance.is_zero()
    }

    pub fn code_hash(&self) -> B256 {
        if self.code.is_empty() {
            KECCAK_EMPTY
        } else {
            keccak256(&self.code)
        }
    }
}

/// Committed world state. Cloning it is how callers snapshot a deployment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    accounts: BTreeMap<Address, Account>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn account(&self, address: &Address) -> Option<&Account> {
        self.accounts.get(address)
    }

    pub fn insert_account(&mut self, address: Address, account: Account) {
        self.accounts.insert(address, account);
    }

    pub fn set_balance(&mut self, address: Address, balance: U256) {
        self.accounts.entry(address).or_default().balance = balance;
    }

    pub fn storage(&self, address: &Address, key: U256) -> U256 {
        self.accounts
            .get(address)
            .and_then(|a| a.storage.get(&key).copied())
            .unwrap_or_default()
    }

    pub fn code(&self, address: &Address) -> Bytes {
        self.accounts
            .get(address)
            .map(|a| a.code.clone())
            .unwrap_or_default()
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&Address, &Account)> {
        self.accounts.iter()
    }
}

#[derive(Debug)]
enum JournalEntry {
    AccountCreated { address: Address, previous: Option<Account> },
    Balance { address: Address, previous: U256 },
    Nonce { address: Address, previous: u64 },
    Code { address: Address, previous: Bytes },
    Storage { address: Address, key: U256, previous: U256 },
    WarmAddress(Address),
    WarmSlot(Address, U256),
    Destructed(Address),
}

#[derive(Debug, Clone, Copy)]
pub struct Checkpoint {
    journal_len: usize,
    logs_len: usize,
}

/// Transaction-scoped state: the world plus the journal that makes nested
/// frames revertible, access lists, and original storage values.
#[derive(Debug)]
pub struct Journaled<'w> {
    world: &'w mut WorldState,
    journal: Vec<JournalEntry>,
    warm_addresses: HashSet<Address>,
    warm_slots: HashSet<(Address, U256)>,
    original: HashMap<(Address, U256), U256>,
    destructed: Vec<Address>,
    pub logs: Vec<super::Log>,
}

impl<'w> Journaled<'w> {
    pub fn new(world: &'w mut WorldState) -> Self {
        Self {
            world,
            journal: Vec::new(),
            warm_addresses: HashSet::new(),
            warm_slots: HashSet::new(),
            original: HashMap::new(),
            destructed: Vec::new(),
            logs: Vec::new(),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            journal_len: self.journal.len(),
            logs_len: self.logs.len(),
        }
    }

    pub fn revert_to(&mut self, checkpoint: Checkpoint) {
        while self.journal.len() > checkpoint.journal_len {
            let entry = self.journal.pop().expect("journal length checked");
            match entry {
                JournalEntry::AccountCreated { address, previous } => match previous {
                    Some(acc) => {
                        self.world.accounts.insert(address, acc);
                    }
                    None => {
                        self.world.accounts.remove(&address);
                    }
                },
                JournalEntry::Balance { address, previous } => {
                    self.world.accounts.entry(address).or_default().balance = previous;
                }
                JournalEntry::Nonce { address, previous } => {
                    self.world.accounts.entry(address).or_default().nonce = previous;
                }
                JournalEntry::Code { address, previous } => {
                    self.world.accounts.entry(address).or_default().code = previous;
                }
                JournalEntry::Storage {
                    address,
                    key,
                    previous,
                } => {
                    let acc = self.world.accounts.entry(address).or_default();
                    if previous.is_zero() {
                        acc.storage.remove(&key);
                    } else {
                        acc.storage.insert(key, previous);
                    }
                }
                JournalEntry::WarmAddress(a) => {
                    self.warm_addresses.remove(&a);
                }
                JournalEntry::WarmSlot(a, k) => {
                    self.warm_slots.remove(&(a, k));
                }
                JournalEntry::Destructed(a) => {
                    if let Some(pos) = self.destructed.iter().rposition(|d| *d == a) {
                        self.destructed.remove(pos);
                    }
                }
            }
        }
        self.logs.truncate(checkpoint.logs_len);
    }

    /// Marks an address warm without journaling (transaction preamble).
    pub fn prewarm(&mut self, address: Address) {
        self.warm_addresses.insert(address);
    }

    /// Returns true when the address was cold before this access.
    pub fn access_address(&mut self, address: Address) -> bool {
        if self.warm_addresses.insert(address) {
            self.journal.push(JournalEntry::WarmAddress(address));
            true
        } else {
            false
        }
    }

    /// Returns true when the slot was cold before this access.
    pub fn access_slot(&mut self, address: Address, key: U256) -> bool {
        if self.warm_slots.insert((address, key)) {
            self.journal.push(JournalEntry::WarmSlot(address, key));
            true
        } else {
            false
        }
    }

    pub fn is_empty_account(&self, address: &Address) -> bool {
        self.world
            .accounts
            .get(address)
            .map(Account::is_empty)
            .unwrap_or(true)
    }

    pub fn balance(&self, address: &Address) -> U256 {
        self.world
            .accounts
            .get(address)
            .map(|a| a.balance)
            .unwrap_or_default()
    }

    pub fn nonce(&self, address: &Address) -> u64 {
        self.world
            .accounts
            .get(address)
            .map(|a| a.nonce)
            .unwrap_or_default()
    }

    pub fn code(&self, address: &Address) -> Bytes {
        self.world.code(address)
    }

    pub fn code_hash(&self, address: &Address) -> B256 {
        match self.world.accounts.get(address) {
            Some(acc) if !acc.is_empty() => acc.code_hash(),
            _ => B256::ZERO,
        }
    }

    fn ensure_account(&mut self, address: Address) {
        if !self.world.accounts.contains_key(&address) {
            self.journal.push(JournalEntry::AccountCreated {
                address,
                previous: None,
            });
            self.world.accounts.insert(address, Account::default());
        }
    }

    pub fn touch(&mut self, address: Address) {
        self.ensure_account(address);
    }

    pub fn set_balance(&mut self, address: Address, balance: U256) {
        self.ensure_account(address);
        let acc = self.world.accounts.get_mut(&address).expect("ensured");
        self.journal.push(JournalEntry::Balance {
            address,
            previous: acc.balance,
        });
        acc.balance = balance;
    }

    /// Moves `value` between accounts. Returns false on insufficient balance.
    pub fn transfer(&mut self, from: Address, to: Address, value: U256) -> bool {
        let from_balance = self.balance(&from);
        if from_balance < value {
            return false;
        }
        self.ensure_account(to);
        if value.is_zero() || from == to {
            return true;
        }
        self.set_balance(from, from_balance - value);
        let to_balance = self.balance(&to);
        self.set_balance(to, to_balance.saturating_add(value));
        true
    }

    pub fn set_nonce(&mut self, address: Address, nonce: u64) {
        self.ensure_account(address);
        let acc = self.world.accounts.get_mut(&address).expect("ensured");
        self.journal.push(JournalEntry::Nonce {
            address,
            previous: acc.nonce,
        });
        acc.nonce = nonce;
    }

    pub fn set_code(&mut self, address: Address, code: Bytes) {
        self.ensure_account(address);
        let acc = self.world.accounts.get_mut(&address).expect("ensured");
        let previous = std::mem::replace(&mut acc.code, code);
        self.journal.push(JournalEntry::Code { address, previous });
    }

    /// Replaces whatever lives at `address` with a fresh account (contract creation).
    pub fn create_account(&mut self, address: Address, nonce: u64) {
        let previous = self.world.accounts.get(&address).cloned();
        let balance = previous.as_ref().map(|a| a.balance).unwrap_or_default();
        self.journal.push(JournalEntry::AccountCreated { address, previous });
        self.world.accounts.insert(
            address,
            Account {
                balance,
                nonce,
                ..Account::default()
            },
        );
    }

    pub fn sload(&self, address: &Address, key: U256) -> U256 {
        self.world.storage(address, key)
    }

    /// Value of the slot at the start of the transaction.
    pub fn original(&mut self, address: Address, key: U256) -> U256 {
        let current = self.world.storage(&address, key);
        *self.original.entry((address, key)).or_insert(current)
    }

    pub fn sstore(&mut self, address: Address, key: U256, value: U256) {
        self.original(address, key);
        self.ensure_account(address);
        let acc = self.world.accounts.get_mut(&address).expect("ensured");
        let previous = acc.storage.get(&key).copied().unwrap_or_default();
        self.journal.push(JournalEntry::Storage {
            address,
            key,
            previous,
        });
        if value.is_zero() {
            acc.storage.remove(&key);
        } else {
            acc.storage.insert(key, value);
        }
    }

    pub fn mark_destructed(&mut self, address: Address) {
        if !self.destructed.contains(&address) {
            self.destructed.push(address);
            self.journal.push(JournalEntry::Destructed(address));
        }
    }

    /// Applies end-of-transaction effects: self-destructed accounts are
    /// removed and touched empty accounts are cleared (EIP-161).
    pub fn finalize(self) {
        for address in self.destructed {
            self.world.accounts.remove(&address);
        }
        self.world.accounts.retain(|_, acc| !acc.is_empty());
    }
}
