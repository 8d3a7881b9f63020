//! BIO label scheme over the six MultiCoNER entity types.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Coarse entity category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityType {
    Per,
    Loc,
    Grp,
    Corp,
    Cw,
    Prod,
}

impl EntityType {
    pub const ALL: [EntityType; 6] = [
        EntityType::Per,
        EntityType::Loc,
        EntityType::Grp,
        EntityType::Corp,
        EntityType::Cw,
        EntityType::Prod,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Loc => "LOC",
            EntityType::Grp => "GRP",
            EntityType::Corp => "CORP",
            EntityType::Cw => "CW",
            EntityType::Prod => "PROD",
        }
    }

    /// Position in [`EntityType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// A single BIO label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    O,
    B(EntityType),
    I(EntityType),
}

impl Label {
    /// Dense index: `O` is 0, then `B-x`, `I-x` pairs in [`EntityType::ALL`] order.
    pub fn index(self) -> usize {
        match self {
            Label::O => 0,
            Label::B(t) => 1 + 2 * t.index(),
            Label::I(t) => 2 + 2 * t.index(),
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Label::O),
            i => {
                let t = EntityType::from_index((i - 1) / 2)?;
                Some(if i % 2 == 1 { Label::B(t) } else { Label::I(t) })
            }
        }
    }

    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            Label::O => None,
            Label::B(t) | Label::I(t) => Some(t),
        }
    }

    /// Whether `self` may directly follow `prev` in a well-formed BIO sequence.
    pub fn may_follow(self, prev: Option<Label>) -> bool {
        match self {
            Label::I(t) => matches!(prev, Some(Label::B(p)) | Some(Label::I(p)) if p == t),
            _ => true,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::O => f.write_str("O"),
            Label::B(t) => write!(f, "B-{t}"),
            Label::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Label::O);
        }
        let unknown = || Error::UnknownLabel(s.to_string());
        let (prefix, ty) = s.split_once('-').ok_or_else(unknown)?;
        let ty: EntityType = ty.parse().map_err(|_| unknown())?;
        match prefix {
            "B" => Ok(Label::B(ty)),
            "I" => Ok(Label::I(ty)),
            _ => Err(unknown()),
        }
    }
}

/// The ordered entity types and the BIO labels derived from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelScheme {
    entity_types: Vec<EntityType>,
    labels: Vec<Label>,
}

impl LabelScheme {
    pub fn multiconer() -> Self {
        let labels = (0..2 * EntityType::ALL.len() + 1)
            .map(|i| Label::from_index(i).expect("dense label index"))
            .collect();
        Self {
            entity_types: EntityType::ALL.to_vec(),
            labels,
        }
    }

    pub fn entity_types(&self) -> &[EntityType] {
        &self.entity_types
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Default for LabelScheme {
    fn default() -> Self {
        Self::multiconer()
    }
}

/// Rewrites every `I-x` that does not continue an `x` span into `B-x`.
/// Returns the number of labels changed.
pub fn repair_bio(labels: &mut [Label]) -> usize {
    let mut repaired = 0;
    let mut prev = None;
    for label in labels.iter_mut() {
        if !label.may_follow(prev) {
            if let Label::I(t) = *label {
                *label = Label::B(t);
                repaired += 1;
            }
        }
        prev = Some(*label);
    }
    repaired
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_has_thirteen_labels() {
        let scheme = LabelScheme::multiconer();
        assert_eq!(scheme.len(), 2 * scheme.entity_types().len() + 1);
        for (i, label) in scheme.labels().iter().enumerate() {
            assert_eq!(label.index(), i);
            let text = label.to_string();
            assert_eq!(text.parse::<Label>().unwrap(), *label);
            if *label != Label::O {
                let (prefix, ty) = text.split_once('-').unwrap();
                assert!(prefix == "B" || prefix == "I");
                assert!(ty.parse::<EntityType>().is_ok());
            }
        }
        assert_eq!(Label::from_index(13), None);
    }

    #[test]
    fn rejects_unknown_labels() {
        for bad in ["B-MISC", "X-PER", "", "o", "B-", "BPER"] {
            assert!(matches!(bad.parse::<Label>(), Err(Error::UnknownLabel(_))), "{bad}");
        }
    }

    #[test]
    fn repair_converts_orphan_inside() {
        let mut labels: Vec<Label> = ["I-PER", "I-PER", "O", "I-LOC", "B-GRP", "I-CW"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(repair_bio(&mut labels), 3);
        let text: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
        assert_eq!(text, ["B-PER", "I-PER", "O", "B-LOC", "B-GRP", "B-CW"]);
        assert_eq!(repair_bio(&mut labels), 0);
    }
}
