//! Text parsers shared by flags and config files.

use std::str::FromStr;

use crate::CliError;

/// Threshold grid request.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// `count` evenly spaced points from `start` to `stop` inclusive.
    Linear { start: f64, stop: f64, count: usize },
    /// `count` quantiles of a pilot exact Monte-Carlo run.
    Quantile { count: usize },
}

impl GridSpec {
    /// Grid points of a linear spec; `None` for quantile grids.
    pub fn linear_points(&self) -> Option<Vec<f64>> {
        match *self {
            GridSpec::Linear { start, stop, count } => Some(if count == 1 {
                vec![start]
            } else {
                let step = (stop - start) / (count - 1) as f64;
                (0..count).map(|i| if i + 1 == count { stop } else { start + i as f64 * step }).collect()
            }),
            GridSpec::Quantile { .. } => None,
        }
    }
}

/// Upper limit on grid sizes and list lengths accepted from text.
pub const MAX_ITEMS: usize = 1_000_000;

/// Parses `start:stop:count`.
pub fn parse_t_grid(text: &str) -> Result<GridSpec, CliError> {
    let parts: Vec<&str> = text.trim().split(':').collect();
    let [start, stop, count] = parts[..] else {
        return Err(CliError::usage(format!("threshold grid '{text}' is not start:stop:count")));
    };
    let start: f64 = parse_number(start, "grid start")?;
    let stop: f64 = parse_number(stop, "grid stop")?;
    let count: usize = parse_number(count, "grid count")?;
    if count == 0 {
        return Err(CliError::usage("empty threshold grid"));
    }
    if count > MAX_ITEMS {
        return Err(CliError::usage(format!("grid count {count} exceeds {MAX_ITEMS}")));
    }
    if !(start.is_finite() && stop.is_finite()) || start < 0.0 || stop < start {
        return Err(CliError::usage(format!("threshold grid needs 0 <= start <= stop, got {start}:{stop}")));
    }
    Ok(GridSpec::Linear { start, stop, count })
}

/// Parses a quantile-grid count.
pub fn parse_quantile_grid(count: usize) -> Result<GridSpec, CliError> {
    if count == 0 {
        return Err(CliError::usage("empty threshold grid"));
    }
    if count > MAX_ITEMS {
        return Err(CliError::usage(format!("grid count {count} exceeds {MAX_ITEMS}")));
    }
    Ok(GridSpec::Quantile { count })
}

fn parse_number<T: FromStr>(s: &str, what: &str) -> Result<T, CliError> {
    s.trim().parse().map_err(|_| CliError::usage(format!("invalid {what} '{}'", s.trim())))
}

/// Parses a comma-separated list such as `50,100,200`.
pub fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<&str> = text.split(',').map(str::trim).collect();
    if items.iter().all(|s| s.is_empty()) {
        return Err(CliError::usage(format!("empty {what} list")));
    }
    if items.len() > MAX_ITEMS {
        return Err(CliError::usage(format!("{what} list longer than {MAX_ITEMS}")));
    }
    items.into_iter().map(|s| parse_number(s, what)).collect()
}

/// Parses an explicit observation set: 1-based port indices, strictly increasing, within `1..=n`.
pub fn parse_index_set(text: &str, n: usize) -> Result<Vec<usize>, CliError> {
    let idx: Vec<usize> = parse_list(text, "port index")?;
    validate_index_set(&idx, n)?;
    Ok(idx)
}

pub fn validate_index_set(idx: &[usize], n: usize) -> Result<(), CliError> {
    if idx.is_empty() {
        return Err(CliError::usage("observation set is empty"));
    }
    if idx.iter().any(|&k| k < 1 || k > n) {
        return Err(CliError::usage(format!("port indices must lie in [1, {n}]")));
    }
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::usage("port indices must be strictly increasing"));
    }
    Ok(())
}
