use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::rng::stream;
use crate::{Error, Result};

/// Port-selection rule for the observation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// `M` distinct ports drawn uniformly.
    Random,
    /// Evenly spaced grid that includes both end ports.
    UniformEndpoints,
    /// Evenly spaced grid centred in the aperture, end ports not forced.
    UniformInterior,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::UniformEndpoints, Strategy::UniformInterior, Strategy::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::UniformEndpoints => "uniform_endpoints",
            Strategy::UniformInterior => "uniform_interior",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "uniform_endpoints" => Ok(Strategy::UniformEndpoints),
            "uniform_interior" => Ok(Strategy::UniformInterior),
            other => Err(Error::domain(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Moves every duplicate to the nearest unused port, larger side first.
fn repair(raw: Vec<usize>, n: usize) -> Vec<usize> {
    let mut used = BTreeSet::new();
    let mut dupes = Vec::new();
    for k in raw {
        if !used.insert(k) {
            dupes.push(k);
        }
    }
    for k in dupes {
        let slot = (1..n)
            .flat_map(|d| [k.checked_add(d), k.checked_sub(d)])
            .flatten()
            .find(|&c| (1..=n).contains(&c) && !used.contains(&c))
            .expect("M <= N leaves a free port");
        used.insert(slot);
    }
    used.into_iter().collect()
}

/// Observed port indices (1-based, ascending) for strategy `strategy`.
pub fn port_select(strategy: Strategy, n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m < 1 || m > n {
        return Err(Error::Selection(format!("need 1 <= M <= N, got M = {m}, N = {n}")));
    }
    let raw: Vec<usize> = match strategy {
        Strategy::Random => {
            let mut rng = stream(seed);
            let mut v: Vec<usize> = rand::seq::index::sample(&mut rng, n, m).into_iter().map(|k| k + 1).collect();
            v.sort_unstable();
            return Ok(v);
        }
        Strategy::UniformEndpoints => {
            if m < 2 {
                return Err(Error::Selection("uniform_endpoints needs M >= 2".into()));
            }
            let step = (n - 1) as f64 / (m - 1) as f64;
            (0..m).map(|i| (1.0 + i as f64 * step).round() as usize).collect()
        }
        Strategy::UniformInterior => {
            // Integer spacing floor(N/M); the leftover ports are split between the two
            // ends, the larger share in front.
            let spacing = n / m;
            let slack = n - 1 - (m - 1) * spacing;
            let start = 1 + slack.div_ceil(2);
            (0..m).map(|i| start + i * spacing).collect()
        }
    };
    Ok(repair(raw, n))
}

/// Longest stretch a reconstruction must bridge: the largest index spacing
/// between consecutive observations, or a boundary run `k_1 - 1`, `N - k_M`.
pub fn max_gap(indices: &[usize], n: usize) -> usize {
    let (Some(&first), Some(&last)) = (indices.first(), indices.last()) else {
        return n;
    };
    let interior = indices.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
    interior.max(first - 1).max(n.saturating_sub(last))
}
