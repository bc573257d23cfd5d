use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::signals::{ATTENTION_EXTRA, P_D, P_T, THETA1, THETA2};

/// Width of the control vector.
pub const CONTROL_DIM: usize = 3;
/// Hidden widths of the controller network `F` for NNetV2/ANNet/DANNet.
pub const F_HIDDEN: [usize; 3] = [200, 200, 10];
/// Hidden width of the NNet baseline.
pub const NNET_HIDDEN: usize = 5;
/// Hidden widths of the attention network `A`.
pub const A_HIDDEN: [usize; 2] = [64, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Shallow `s-5-u` MLP baseline.
    Nnet,
    /// `s-200-200-10-u` MLP.
    NnetV2,
    /// NNetV2 with a softmax input mask.
    Annet,
    /// NNetV2 with input and output masks.
    Dannet,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [Self::Nnet, Self::NnetV2, Self::Annet, Self::Dannet];

    pub fn has_attention(self) -> bool {
        matches!(self, Self::Annet | Self::Dannet)
    }

    /// Upper-case tag used in checkpoint headers.
    pub fn tag(self) -> &'static str {
        match self {
            Self::Nnet => "NNET",
            Self::NnetV2 => "NNETV2",
            Self::Annet => "ANNET",
            Self::Dannet => "DANNET",
        }
    }

    /// Display name used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Nnet => "NNet",
            Self::NnetV2 => "NNetV2",
            Self::Annet => "ANNet",
            Self::Dannet => "DANNet",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nnet" => Ok(Self::Nnet),
            "nnetv2" => Ok(Self::NnetV2),
            "annet" => Ok(Self::Annet),
            "dannet" => Ok(Self::Dannet),
            other => Err(Error::InvalidArgument(format!("unknown controller kind {other:?}"))),
        }
    }
}

/// Architecture descriptor. Layer widths follow from `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub input_dim: usize,
    pub attention_input_dim: Option<usize>,
}

impl ControllerSpec {
    pub fn new(kind: ControllerKind, input_dim: usize, attention_input_dim: Option<usize>) -> Result<Self> {
        let spec = Self {
            kind,
            input_dim,
            attention_input_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec from the sensor configuration: `use_pt` adds the telescope
    /// pressure, `extended` adds `p_l, p_b, a` to the attention input (or, for
    /// the plain kinds, concatenates them to the controller input).
    pub fn from_sensors(kind: ControllerKind, use_pt: bool, extended: bool) -> Result<Self> {
        let base = if use_pt { 4 } else { 3 };
        match (kind, extended) {
            (ControllerKind::Nnet, true) => Err(Error::InvalidArgument(
                "extended attention sensors need an attention controller (or NNetV2 via input concatenation); NNet has neither".into(),
            )),
            (ControllerKind::NnetV2, true) => Self::new(kind, base + 3, None),
            (k, _) if !k.has_attention() => Self::new(k, base, None),
            (k, ext) => Self::new(k, base, Some(if ext { base + 3 } else { base })),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be positive".into()));
        }
        match (self.kind.has_attention(), self.attention_input_dim) {
            (false, Some(_)) => Err(Error::InvalidArgument(format!(
                "{} has no attention module but attention_input_dim is set",
                self.kind
            ))),
            (true, None) => Err(Error::InvalidArgument(format!(
                "{} requires attention_input_dim",
                self.kind
            ))),
            (true, Some(a)) if a != self.input_dim && a != self.input_dim + 3 => {
                Err(Error::InvalidArgument(format!(
                    "attention_input_dim {a} must equal input_dim {} or input_dim + 3",
                    self.input_dim
                )))
            }
            _ => Ok(()),
        }
    }

    /// Width of the attention head output (`m`, or `<m, m_u>` for DANNet).
    pub fn mask_dim(&self) -> Option<usize> {
        match self.kind {
            ControllerKind::Annet => Some(self.input_dim),
            ControllerKind::Dannet => Some(self.input_dim + CONTROL_DIM),
            _ => None,
        }
    }

    /// Layer widths of `F`, input to output.
    pub fn controller_widths(&self) -> Vec<usize> {
        match self.kind {
            ControllerKind::Nnet => vec![self.input_dim, NNET_HIDDEN, CONTROL_DIM],
            _ => {
                let mut w = vec![self.input_dim];
                w.extend_from_slice(&F_HIDDEN);
                w.push(CONTROL_DIM);
                w
            }
        }
    }

    /// Layer widths of `A`, input to output.
    pub fn attention_widths(&self) -> Option<Vec<usize>> {
        let (input, out) = (self.attention_input_dim?, self.mask_dim()?);
        let mut w = vec![input];
        w.extend_from_slice(&A_HIDDEN);
        w.push(out);
        Some(w)
    }

    pub fn controller_param_count(&self) -> usize {
        dense_param_count(&self.controller_widths())
    }

    pub fn attention_param_count(&self) -> usize {
        self.attention_widths().map_or(0, |w| dense_param_count(&w))
    }

    pub fn param_count(&self) -> usize {
        self.controller_param_count() + self.attention_param_count()
    }

    /// Extended-vector channels feeding `F`, in order.
    pub fn input_channels(&self) -> Result<Vec<usize>> {
        let base3 = vec![THETA1, THETA2, P_D];
        let mut with_pt = base3.clone();
        with_pt.push(P_T);
        let extend = |mut v: Vec<usize>| {
            v.extend_from_slice(&ATTENTION_EXTRA);
            v
        };
        match self.input_dim {
            3 => Ok(base3),
            4 => Ok(with_pt),
            6 if !self.kind.has_attention() => Ok(extend(base3)),
            7 if !self.kind.has_attention() => Ok(extend(with_pt)),
            d => Err(Error::InvalidArgument(format!(
                "no sensor layout for {} with input_dim {d}",
                self.kind
            ))),
        }
    }

    /// Extended-vector channels feeding `A`, in order.
    pub fn attention_channels(&self) -> Result<Option<Vec<usize>>> {
        let Some(a) = self.attention_input_dim else {
            return Ok(None);
        };
        let mut ch = self.input_channels()?;
        if a == self.input_dim + 3 {
            ch.extend_from_slice(&ATTENTION_EXTRA);
        }
        Ok(Some(ch))
    }

    /// Whether `p_t` is among the controller inputs.
    pub fn uses_pt(&self) -> bool {
        self.input_channels().is_ok_and(|c| c.contains(&P_T))
    }

    /// Whether the additional attention signals are used (attention input or concatenation).
    pub fn uses_extended(&self) -> bool {
        match self.attention_input_dim {
            Some(a) => a == self.input_dim + 3,
            None => self.input_dim >= 6,
        }
    }
}

fn dense_param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}
