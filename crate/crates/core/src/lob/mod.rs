//! Limit order book, matching and stylized facts.

mod book;
pub mod export;
mod facts;

use thiserror::Error;

pub use book::{
    AgentId, Book, Execution, OrderId, OrderKind, OrderRequest, Price, RestingOrder, Side, Submission, Volume,
};
pub use facts::{depth_of, snapshot_facts, DepthFormula, LevelCount, LevelFacts, StylizedFacts};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LobError {
    #[error("no resting order with id {0}")]
    UnknownTarget(OrderId),
    #[error("order {order} is not owned by agent {owner}")]
    NotOwner { order: OrderId, owner: AgentId },
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("depth is only defined for limit orders")]
    NotLimit,
    #[error("{0:?} side of the book is empty")]
    EmptySide(Side),
}

#[cfg(test)]
pub(crate) use book::tests::worked_example_book;
