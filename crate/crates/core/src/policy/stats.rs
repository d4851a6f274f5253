use crate::error::{Error, Result};
use crate::policy::grid::DistributionGrid;

/// Shannon entropy in nats; `0 log 0 = 0`.
pub fn entropy(row: &[f64]) -> f64 {
    -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// `D_KL(a || b)`; `+inf` when `b` is zero somewhere `a` is positive.
pub fn kl(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&p, &q) in a.iter().zip(b) {
        if p > 0.0 {
            if q <= 0.0 {
                return f64::INFINITY;
            }
            total += p * (p / q).ln();
        }
    }
    total.max(0.0)
}

/// Mean entropy over completion `positions`.
pub fn masked_entropy(grid: &DistributionGrid, positions: &[usize]) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::invalid("masked_entropy needs at least one position"));
    }
    check_positions(grid, positions)?;
    Ok(positions.iter().map(|&i| entropy(grid.completion_row(i))).sum::<f64>() / positions.len() as f64)
}

/// Mean per-position `D_KL(a || b)` over completion `positions`. Unbounded divergence is
/// reported as `f64::INFINITY`, not as an error.
pub fn positionwise_kl(a: &DistributionGrid, b: &DistributionGrid, positions: &[usize]) -> Result<f64> {
    if a.rows() != b.rows() || a.vocab_size() != b.vocab_size() || a.prompt_len() != b.prompt_len() {
        return Err(Error::invalid("grids are not congruent"));
    }
    if positions.is_empty() {
        return Err(Error::invalid("positionwise_kl needs at least one position"));
    }
    check_positions(a, positions)?;
    let total: f64 = positions.iter().map(|&i| kl(a.completion_row(i), b.completion_row(i))).sum();
    Ok(total / positions.len() as f64)
}

fn check_positions(grid: &DistributionGrid, positions: &[usize]) -> Result<()> {
    let n = grid.rows() - grid.prompt_len();
    match positions.iter().find(|&&p| p >= n) {
        Some(p) => Err(Error::invalid(format!("position {p} outside completion of length {n}"))),
        None => Ok(()),
    }
}
