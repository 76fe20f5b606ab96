//! Normalized graphlet frequency distributions and their JSON form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canon::CanonicalCode;
use crate::error::Result;

/// Per-type observation count and normalized frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeEntry {
    /// Exact subgraph count for the oracle; number of kept samples for the
    /// estimators.
    pub count: u64,
    pub freq: f64,
}

/// Distribution over graphlet types, keyed by full canonical code.
///
/// Frequencies sum to 1 unless the distribution is empty. For exact counts
/// each frequency is `count / total`; estimators may weight samples, in which
/// case `freq` carries the estimate and `count` the raw tally.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrequencyDistribution {
    pub k_set: Vec<usize>,
    pub total: u64,
    pub entries: BTreeMap<CanonicalCode, TypeEntry>,
}

impl FrequencyDistribution {
    /// Exact normalization: `freq = count / total`.
    pub fn from_counts(k_set: Vec<usize>, counts: &BTreeMap<CanonicalCode, u64>) -> Self {
        let total: u64 = counts.values().sum();
        let entries = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&code, &count)| {
                let freq = count as f64 / total as f64;
                (code, TypeEntry { count, freq })
            })
            .collect();
        FrequencyDistribution {
            k_set,
            total,
            entries,
        }
    }

    /// Builds from raw tallies plus non-negative per-type mass; frequencies
    /// are the mass normalized to sum 1.
    pub fn from_weighted(
        k_set: Vec<usize>,
        counts: &BTreeMap<CanonicalCode, u64>,
        mass: &BTreeMap<CanonicalCode, f64>,
    ) -> Self {
        let total_mass: f64 = mass.values().sum();
        let entries = if total_mass > 0.0 {
            mass.iter()
                .filter(|(_, &m)| m > 0.0)
                .map(|(&code, &m)| {
                    let count = counts.get(&code).copied().unwrap_or(0);
                    (
                        code,
                        TypeEntry {
                            count,
                            freq: m / total_mass,
                        },
                    )
                })
                .collect()
        } else {
            BTreeMap::new()
        };
        FrequencyDistribution {
            k_set,
            total: counts.values().sum(),
            entries,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn freq(&self, code: &CanonicalCode) -> f64 {
        self.entries.get(code).map_or(0.0, |e| e.freq)
    }

    pub fn count(&self, code: &CanonicalCode) -> u64 {
        self.entries.get(code).map_or(0, |e| e.count)
    }

    pub fn freq_sum(&self) -> f64 {
        self.entries.values().map(|e| e.freq).sum()
    }

    /// Frequencies restricted to one graphlet size and renormalized.
    pub fn restrict_to_k(&self, k: usize) -> FrequencyDistribution {
        let counts: BTreeMap<_, _> = self
            .entries
            .iter()
            .filter(|(c, _)| c.k() == k)
            .map(|(&c, e)| (c, e.count))
            .collect();
        let mass: BTreeMap<_, _> = self
            .entries
            .iter()
            .filter(|(c, _)| c.k() == k)
            .map(|(&c, e)| (c, e.freq))
            .collect();
        FrequencyDistribution::from_weighted(vec![k], &counts, &mass)
    }

    /// Entries sorted by descending frequency, ties by code.
    pub fn sorted_entries(&self) -> Vec<(CanonicalCode, TypeEntry)> {
        let mut v: Vec<_> = self.entries.iter().map(|(&c, &e)| (c, e)).collect();
        v.sort_by(|a, b| b.1.freq.total_cmp(&a.1.freq).then(a.0.cmp(&b.0)));
        v
    }

    pub fn to_json(&self) -> DistributionJson {
        DistributionJson {
            k_set: self.k_set.clone(),
            total: self.total,
            entries: self
                .sorted_entries()
                .into_iter()
                .map(|(code, e)| EntryJson {
                    code,
                    alias: code.alias().map(str::to_string),
                    count: e.count,
                    freq: e.freq,
                })
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json())?)
    }

    pub fn from_json(j: &DistributionJson) -> Self {
        FrequencyDistribution {
            k_set: j.k_set.clone(),
            total: j.total,
            entries: j
                .entries
                .iter()
                .map(|e| {
                    (
                        e.code,
                        TypeEntry {
                            count: e.count,
                            freq: e.freq,
                        },
                    )
                })
                .collect(),
        }
    }

    /// CSV rows `code,alias,count,freq`, in descending frequency.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("code,alias,count,freq\n");
        for (code, e) in self.sorted_entries() {
            out.push_str(&format!(
                "{code},{},{},{}\n",
                code.alias().unwrap_or(""),
                e.count,
                e.freq
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryJson {
    pub code: CanonicalCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
    pub count: u64,
    pub freq: f64,
}

/// `{"k_set":[4,5], "total": N, "entries":[...]}`, entries by descending freq.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionJson {
    pub k_set: Vec<usize>,
    pub total: u64,
    pub entries: Vec<EntryJson>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::code_for_alias;

    #[test]
    fn counts_normalize() {
        let path = code_for_alias("4-path").unwrap();
        let c5 = code_for_alias("5-cycle").unwrap();
        let counts = BTreeMap::from([(path, 5u64), (c5, 1)]);
        let d = FrequencyDistribution::from_counts(vec![4, 5], &counts);
        assert_eq!(d.total, 6);
        assert_eq!(d.freq(&path), 5.0 / 6.0);
        assert!((d.freq_sum() - 1.0).abs() < 1e-12);
        let j = d.to_json();
        assert_eq!(j.entries[0].alias.as_deref(), Some("4-path"));
        assert_eq!(FrequencyDistribution::from_json(&j), d);
        let r = d.restrict_to_k(5);
        assert_eq!(r.freq(&c5), 1.0);
    }

    #[test]
    fn empty_stays_empty() {
        let d = FrequencyDistribution::from_counts(vec![4], &BTreeMap::new());
        assert!(d.is_empty());
        assert_eq!(d.total, 0);
        let w = FrequencyDistribution::from_weighted(vec![4], &BTreeMap::new(), &BTreeMap::new());
        assert!(w.is_empty());
    }
}
