pub mod commitment;
pub mod constants;
pub mod crypto;
pub mod identity;
pub mod negotiation;
pub mod policy;
pub mod privacy;
pub mod review;
pub mod storage;
