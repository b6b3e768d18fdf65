pub mod clock;
pub mod detectors;
pub mod evm;
pub mod gas;
pub mod gateway;
pub mod innovator;
pub mod library;
pub mod orchestrator;
pub mod seeker;
pub mod verification;
pub mod frontend;
