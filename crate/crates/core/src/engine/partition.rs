use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Granularity label for how parameters are split into surgery units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    WholeModel,
    EncDec,
    AllLayer,
    AllMatrix,
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    /// Segment of the flat parameter vector this group covers.
    pub extent: Range<usize>,
}

impl GroupSpec {
    pub fn len(&self) -> usize {
        self.extent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extent.is_empty()
    }
}

/// Ordered, disjoint and exhaustive split of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    granularity: Granularity,
    groups: Vec<GroupSpec>,
}

impl GroupPartition {
    /// Lays groups out contiguously in the given order.
    pub fn from_lengths<I, S>(granularity: Granularity, lengths: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut offset = 0;
        let groups = lengths
            .into_iter()
            .map(|(name, len)| {
                let spec = GroupSpec {
                    name: name.into(),
                    extent: offset..offset + len,
                };
                offset += len;
                spec
            })
            .collect();
        Self::new(granularity, groups)
    }

    pub fn whole_model(dim: usize) -> Result<Self> {
        Self::from_lengths(Granularity::WholeModel, [("all", dim)])
    }

    pub fn new(granularity: Granularity, groups: Vec<GroupSpec>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::validation("partition has no groups"));
        }
        let mut covered: Vec<&GroupSpec> = groups.iter().collect();
        covered.sort_by_key(|g| g.extent.start);
        let mut next = 0;
        for g in &covered {
            if g.is_empty() {
                return Err(Error::validation(format!("group `{}` is empty", g.name)));
            }
            if g.extent.start != next {
                return Err(Error::validation(format!(
                    "group `{}` starts at {} but {} was expected (extents must be disjoint and exhaustive)",
                    g.name, g.extent.start, next
                )));
            }
            next = g.extent.end;
        }
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|h| h.name == g.name) {
                return Err(Error::validation(format!("duplicate group name `{}`", g.name)));
            }
        }
        Ok(GroupPartition {
            granularity,
            groups,
        })
    }

    pub fn granularity(&self) -> &Granularity {
        &self.granularity
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Total parameter count.
    pub fn dim(&self) -> usize {
        self.groups.iter().map(GroupSpec::len).sum()
    }

    pub fn group(&self, name: &str) -> Option<&GroupSpec> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.name.as_str())
    }

    /// Splits a flat vector into per-group slices, in partition order.
    pub fn split<'a>(&'a self, flat: &'a [f64]) -> Result<Vec<(&'a str, &'a [f64])>> {
        if flat.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: flat.len(),
            });
        }
        Ok(self
            .groups
            .iter()
            .map(|g| (g.name.as_str(), &flat[g.extent.clone()]))
            .collect())
    }
}

/// Serialized form of a partition: groups laid out contiguously in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionLayout {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<Granularity>,
    pub groups: Vec<GroupLength>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupLength {
    pub name: String,
    pub length: usize,
}

impl PartitionLayout {
    /// Without an explicit granularity, a single group is read as
    /// `whole_model` and anything else as `custom`.
    pub fn to_partition(&self) -> Result<GroupPartition> {
        let granularity = self.granularity.clone().unwrap_or_else(|| match self.groups.len() {
            1 => Granularity::WholeModel,
            _ => Granularity::Custom("layout".into()),
        });
        GroupPartition::from_lengths(
            granularity,
            self.groups.iter().map(|g| (g.name.clone(), g.length)),
        )
    }

    /// Groups are listed in memory order.
    pub fn from_partition(partition: &GroupPartition) -> Self {
        let mut groups: Vec<&GroupSpec> = partition.groups().iter().collect();
        groups.sort_by_key(|g| g.extent.start);
        PartitionLayout {
            granularity: Some(partition.granularity().clone()),
            groups: groups
                .into_iter()
                .map(|g| GroupLength {
                    name: g.name.clone(),
                    length: g.len(),
                })
                .collect(),
        }
    }
}
