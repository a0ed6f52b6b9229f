//! Sibling composition of an auxiliary network and a master network.
//!
//! Route 1 (`m = 0`) and route 2 (`m = 1`) alternate whole segments between the
//! two networks: segment `k` runs on the auxiliary network when `k + m` is odd
//! and on the master when it is even. Route 3 is the master alone.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Param, ParamStore, Tape, Var};
use crate::blocknet::{qualify, BlockNet};
use crate::error::{Error, Result};

pub const AUX: &str = "aux";
pub const MASTER: &str = "master";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sibling {
    Aux,
    Master,
}

impl Sibling {
    pub fn scope(self) -> &'static str {
        match self {
            Sibling::Aux => AUX,
            Sibling::Master => MASTER,
        }
    }
}

/// Which head scores a crossed route.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteHead {
    /// The head of whichever network ran the final segment.
    #[default]
    LastSegmentOwner,
    Master,
}

impl FromStr for RouteHead {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last_segment_owner" => Ok(Self::LastSegmentOwner),
            "master" => Ok(Self::Master),
            _ => Err(Error::Config(format!(
                "route_head must be last_segment_owner or master, got `{s}`"
            ))),
        }
    }
}

impl std::fmt::Display for RouteHead {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LastSegmentOwner => "last_segment_owner",
            Self::Master => "master",
        })
    }
}

/// Entry point of a crossed route.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entrance {
    /// `m = 0`: route 1, starts on the auxiliary network.
    Aux = 0,
    /// `m = 1`: route 2, starts on the master network.
    Master = 1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiblingPair {
    pub aux: BlockNet,
    pub master: BlockNet,
    pub route_head: RouteHead,
}

/// Scores of the three routes with the qualified parameter names each touched.
#[derive(Clone, Debug)]
pub struct RouteOutputs {
    pub out1: Var,
    pub out2: Var,
    pub out3: Var,
    pub participation: [BTreeSet<String>; 3],
}

impl SiblingPair {
    /// Both siblings start as copies of `pretrained`.
    pub fn from_pretrained(pretrained: &BlockNet, route_head: RouteHead) -> Result<Self> {
        Self::new(pretrained.clone(), pretrained.clone(), route_head)
    }

    pub fn new(aux: BlockNet, master: BlockNet, route_head: RouteHead) -> Result<Self> {
        if aux.spec() != master.spec() {
            return Err(Error::shape("sibling pair", "auxiliary and master specs differ"));
        }
        let k = master.num_segments();
        if k < 2 {
            return Err(Error::TooFewSegments(k));
        }
        Ok(Self {
            aux,
            master,
            route_head,
        })
    }

    pub fn net(&self, which: Sibling) -> &BlockNet {
        match which {
            Sibling::Aux => &self.aux,
            Sibling::Master => &self.master,
        }
    }

    /// Network executing segment `k` (1-based) for the given entrance.
    pub fn segment_owner(k: usize, entrance: Entrance) -> Sibling {
        if (k + entrance as usize) % 2 == 1 {
            Sibling::Aux
        } else {
            Sibling::Master
        }
    }

    /// Crossed forward pass. Returns the scores and every qualified parameter
    /// name the pass read.
    pub fn route_forward(&self, tape: &mut Tape, x: Var, entrance: Entrance) -> Result<(Var, BTreeSet<String>)> {
        let k_total = self.master.num_segments();
        if k_total < 2 {
            return Err(Error::TooFewSegments(k_total));
        }
        let mut participation = BTreeSet::new();
        let mut h = x;
        let mut last = Sibling::Master;
        for k in 1..=k_total {
            let owner = Self::segment_owner(k, entrance);
            let net = self.net(owner);
            h = net.forward_segment(tape, owner.scope(), k, h)?;
            participation.extend(net.segment_param_names(k).iter().map(|n| qualify(owner.scope(), n)));
            last = owner;
        }
        let head_owner = match self.route_head {
            RouteHead::LastSegmentOwner => last,
            RouteHead::Master => Sibling::Master,
        };
        let net = self.net(head_owner);
        let scores = net.forward_head(tape, head_owner.scope(), h)?;
        participation.extend(net.head_param_names().iter().map(|n| qualify(head_owner.scope(), n)));
        Ok((scores, participation))
    }

    /// Master-only forward.
    pub fn route3_forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.master.forward(tape, MASTER, x)
    }

    pub fn forward_all(&self, tape: &mut Tape, x: Var) -> Result<RouteOutputs> {
        let (out1, p1) = self.route_forward(tape, x, Entrance::Aux)?;
        let (out2, p2) = self.route_forward(tape, x, Entrance::Master)?;
        let out3 = self.route3_forward(tape, x)?;
        Ok(RouteOutputs {
            out1,
            out2,
            out3,
            participation: [p1, p2, self.master_param_names().into_iter().collect()],
        })
    }

    pub fn master_param_names(&self) -> Vec<String> {
        self.master.params().names().map(|n| qualify(MASTER, n)).collect()
    }

    pub fn aux_param_names(&self) -> Vec<String> {
        self.aux.params().names().map(|n| qualify(AUX, n)).collect()
    }

    /// Names the optimizer may step: the master's parameters, plus (when
    /// `update_aux`) every auxiliary parameter some route reads.
    pub fn route_gradient_mask(&self, update_aux: bool) -> BTreeSet<String> {
        let mut mask: BTreeSet<String> = self.master_param_names().into_iter().collect();
        if update_aux {
            let k_total = self.master.num_segments();
            for entrance in [Entrance::Aux, Entrance::Master] {
                let mut last = Sibling::Master;
                for k in 1..=k_total {
                    let owner = Self::segment_owner(k, entrance);
                    if owner == Sibling::Aux {
                        mask.extend(self.aux.segment_param_names(k).iter().map(|n| qualify(AUX, n)));
                    }
                    last = owner;
                }
                if self.route_head == RouteHead::LastSegmentOwner && last == Sibling::Aux {
                    mask.extend(self.aux.head_param_names().iter().map(|n| qualify(AUX, n)));
                }
            }
        }
        mask
    }
}

impl ParamStore for SiblingPair {
    fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        if let Some(rest) = name.strip_prefix("aux.") {
            self.aux.params_mut().get_mut(rest)
        } else if let Some(rest) = name.strip_prefix("master.") {
            self.master.params_mut().get_mut(rest)
        } else {
            None
        }
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = self.aux_param_names();
        names.extend(self.master_param_names());
        names
    }
}
