//! Fault injection plans: aggregator outage, signer outages, in-flight
//! tampering, and the latency model.

use std::collections::BTreeSet;

use crate::error::HarnessError;

/// What a tamper rule corrupts.  Commitment-entry rules model a compromised
/// aggregator rewriting one signer's published commitment (and rebalancing
/// the aggregate, since it holds the MAC keys); share rules model corruption
/// of a share submission in transit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TamperRule {
    CommitmentEntry { victim: u16 },
    ShareValue { signer: u16 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LatencyModel {
    pub fixed_ms: u64,
    pub jitter_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub aggregator_offline: bool,
    /// Signers that never come online: they send nothing in any phase.
    pub signer_offline: BTreeSet<u16>,
    pub tamper: Vec<TamperRule>,
    pub latency: LatencyModel,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, n: u16) -> Result<(), HarnessError> {
        for rule in &self.tamper {
            let target = match rule {
                TamperRule::CommitmentEntry { victim } => victim,
                TamperRule::ShareValue { signer } => signer,
            };
            if *target == 0 || *target > n {
                return Err(HarnessError::Fault(format!(
                    "tamper rule targets signer {target}, but the run has signers 1..={n}"
                )));
            }
        }
        for signer in &self.signer_offline {
            if *signer == 0 || *signer > n {
                return Err(HarnessError::Fault(format!(
                    "offline signer {signer} outside 1..={n}"
                )));
            }
        }
        Ok(())
    }

    pub fn tampered_commitment_victims(&self) -> BTreeSet<u16> {
        self.tamper
            .iter()
            .filter_map(|rule| match rule {
                TamperRule::CommitmentEntry { victim } => Some(*victim),
                _ => None,
            })
            .collect()
    }

    pub fn tampered_share_signers(&self) -> BTreeSet<u16> {
        self.tamper
            .iter()
            .filter_map(|rule| match rule {
                TamperRule::ShareValue { signer } => Some(*signer),
                _ => None,
            })
            .collect()
    }
}
