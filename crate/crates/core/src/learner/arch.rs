use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LearnerError;

/// The fully connected agent architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchKind {
    /// Softmax regression: input -> classes.
    #[serde(rename = "SHL")]
    Shl,
    /// One ReLU hidden layer of 300 units.
    #[serde(rename = "HL1")]
    Hl1,
    /// Two ReLU hidden layers of 500 and 300 units.
    #[serde(rename = "HL2")]
    Hl2,
}

impl ArchKind {
    pub const ALL: [ArchKind; 3] = [ArchKind::Hl2, ArchKind::Hl1, ArchKind::Shl];

    pub fn hidden_widths(self) -> &'static [usize] {
        match self {
            ArchKind::Shl => &[],
            ArchKind::Hl1 => &[300],
            ArchKind::Hl2 => &[500, 300],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArchKind::Shl => "SHL",
            ArchKind::Hl1 => "HL1",
            ArchKind::Hl2 => "HL2",
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            ArchKind::Shl => 0,
            ArchKind::Hl1 => 1,
            ArchKind::Hl2 => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ArchKind::Shl),
            1 => Some(ArchKind::Hl1),
            2 => Some(ArchKind::Hl2),
            _ => None,
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchKind {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SHL" => Ok(ArchKind::Shl),
            "HL1" => Ok(ArchKind::Hl1),
            "HL2" => Ok(ArchKind::Hl2),
            other => Err(LearnerError::InvalidArchitecture(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Layer widths of a multilayer perceptron with ReLU hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Architecture {
    kind: ArchKind,
    input_dim: usize,
    hidden: Vec<usize>,
    num_classes: usize,
}

impl Architecture {
    /// The standard widths for `kind`.
    pub fn new(kind: ArchKind, input_dim: usize, num_classes: usize) -> Result<Self, LearnerError> {
        Self::with_hidden(kind, input_dim, kind.hidden_widths().to_vec(), num_classes)
    }

    /// Custom hidden widths, labelled as `kind` (used for scaled-down variants).
    pub fn with_hidden(
        kind: ArchKind,
        input_dim: usize,
        hidden: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, LearnerError> {
        if input_dim == 0 || num_classes == 0 || hidden.contains(&0) {
            return Err(LearnerError::InvalidArchitecture(format!(
                "widths must be positive (input {input_dim}, hidden {hidden:?}, classes {num_classes})"
            )));
        }
        Ok(Self { kind, input_dim, hidden, num_classes })
    }

    pub fn kind(&self) -> ArchKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `(fan_in, fan_out)` of each dense layer, input to output.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let widths: Vec<usize> = std::iter::once(self.input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.num_classes))
            .collect();
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }
}
