use ndarray::ArrayView1;
use rand::Rng;

use super::regret::regret_matching;
use crate::analysis::{nashconv, NormalFormGame};
use crate::{Error, Result};

/// Initial cumulative regrets for matrix regret matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegretStart {
    /// All zero: the first strategy is uniform.
    Zero,
    /// Unit regret on one action: the first strategy is that pure action.
    Pure(usize),
    /// Independent uniform draws in `[0, 1)`.
    Random,
}

/// Simultaneous regret matching with exact expected payoffs; returns the
/// time-averaged strategies.
pub fn normal_form_regret_matching<R: Rng + ?Sized>(
    game: &NormalFormGame,
    iterations: u64,
    start: RegretStart,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    Ok(normal_form_regret_matching_traced(game, iterations, start, &[], rng)?.0)
}

/// As [`normal_form_regret_matching`], also recording the NashConv of the
/// average strategies after each iteration count in `checkpoints`.
pub fn normal_form_regret_matching_traced<R: Rng + ?Sized>(
    game: &NormalFormGame,
    iterations: u64,
    start: RegretStart,
    checkpoints: &[u64],
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<(u64, f64)>)> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    let sizes = [game.num_policies(0), game.num_policies(1)];
    let mut regrets: Vec<Vec<f64>> = Vec::with_capacity(2);
    for &n in &sizes {
        regrets.push(match start {
            RegretStart::Zero => vec![0.0; n],
            RegretStart::Pure(a) => {
                if a >= n {
                    return Err(Error::InvalidArgument(format!("start action {a} out of range")));
                }
                let mut r = vec![0.0; n];
                r[a] = 1.0;
                r
            }
            RegretStart::Random => (0..n).map(|_| rng.random::<f64>()).collect(),
        });
    }
    let mut sums: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut trace = Vec::new();
    let mut next = checkpoints.iter().peekable();
    for t in 1..=iterations {
        let sigma: Vec<Vec<f64>> = regrets.iter().map(|r| regret_matching(r).to_vec()).collect();
        for i in 0..2 {
            for (s, x) in sums[i].iter_mut().zip(&sigma[i]) {
                *s += x;
            }
            let u = game.payoff(i).dot(&ArrayView1::from(&sigma[1 - i][..]));
            let v: f64 = u.iter().zip(&sigma[i]).map(|(a, b)| a * b).sum();
            for (r, x) in regrets[i].iter_mut().zip(u.iter()) {
                *r += x - v;
            }
        }
        while next.peek().is_some_and(|&&c| c <= t) {
            if *next.next().unwrap() == t {
                trace.push((t, nashconv(game, &average(&sums, t))));
            }
        }
    }
    Ok((average(&sums, iterations), trace))
}

fn average(sums: &[Vec<f64>], t: u64) -> Vec<Vec<f64>> {
    sums.iter()
        .map(|s| s.iter().map(|x| x / t as f64).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from;
    use ndarray::array;

    #[test]
    fn zero_start_matching_pennies_stays_uniform() {
        let mp = NormalFormGame::zero_sum(array![[1.0, -1.0], [-1.0, 1.0]]);
        let avg = normal_form_regret_matching(&mp, 100, RegretStart::Zero, &mut rng_from(0)).unwrap();
        assert_eq!(avg, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn pure_start_converges() {
        let mp = NormalFormGame::zero_sum(array![[1.0, -1.0], [-1.0, 1.0]]);
        let (avg, trace) =
            normal_form_regret_matching_traced(&mp, 10_000, RegretStart::Pure(0), &[100, 10_000], &mut rng_from(0))
                .unwrap();
        for p in &avg {
            assert!((p[0] - 0.5).abs() < 0.02);
        }
        assert_eq!(trace.len(), 2);
        assert!(trace[1].1 < trace[0].1);
    }

    #[test]
    fn bad_start() {
        let mp = NormalFormGame::zero_sum(array![[1.0, -1.0], [-1.0, 1.0]]);
        assert!(normal_form_regret_matching(&mp, 1, RegretStart::Pure(2), &mut rng_from(0)).is_err());
        assert!(normal_form_regret_matching(&mp, 0, RegretStart::Zero, &mut rng_from(0)).is_err());
    }
}
