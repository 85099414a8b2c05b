//! Aadhaar-keyed unified payments: identity directory, double-entry ledger,
//! multi-factor authorization, transfer engine, channel adapters and the
//! HTTP-independent gateway.

pub mod aadhaar;
pub mod audit;
pub mod auth;
pub mod bank;
pub mod channels;
pub mod clock;
pub mod directory;
pub mod engine;
pub mod events;
pub mod gateway;
pub mod ledger;
pub mod money;
pub mod scenario;
pub mod state;
pub mod store;
pub mod transfer;

pub use aadhaar::{validate_aadhaar, AadhaarError, AadhaarId};
pub use auth::{AuthEvidence, AuthPolicy, AuthProof, Enrollment, FactorKind, Template};
pub use directory::{Alias, AliasKind, Directory};
pub use engine::{Engine, EngineError, MoneyOrderIntake};
pub use gateway::{ApiRequest, ApiResponse, Config, Gateway};
pub use ledger::{AccountRef, Ledger, Posting, SystemAccount, Wallet, WalletStatus};
pub use money::Money;
pub use state::State;
pub use transfer::{
    Channel, MoneyOrder, MoneyOrderState, PartySelector, Receipt, ReceiptStatus, Receiver, RejectReason,
    Transaction, TransferIntent, TxnKind, TxnState,
};
