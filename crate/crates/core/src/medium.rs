//! The random environment: targets `omega_k`, `k` in Z, with `omega_0 = 0` and
//! i.i.d. gaps `zeta_k = omega_k - omega_{k-1}`.
//!
//! The medium is materialized lazily outward from the origin. Gap `zeta_k` is
//! drawn from ChaCha stream `k` of the environment key, so its value depends
//! only on `(seed, k)` and never on the order in which targets are queried.

use rand_chacha::ChaCha8Rng;

use crate::heavy_tail::{sample_gap, GapDistribution};
use crate::rng;

#[derive(Clone, Debug)]
enum GapSource {
    Random { dist: GapDistribution, base: ChaCha8Rng },
    /// Explicit gaps; only meaningful inside the listed range.
    Fixed { pos: Vec<f64>, neg: Vec<f64> },
    Constant(f64),
}

/// Running sum with Neumaier compensation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Debug)]
pub struct Environment {
    source: GapSource,
    seed: u64,
    /// `zeta_1, zeta_2, ...`
    gaps_pos: Vec<f64>,
    /// `zeta_0, zeta_{-1}, ...`
    gaps_neg: Vec<f64>,
    /// `omega_1, omega_2, ...`
    targets_pos: Vec<f64>,
    /// `omega_{-1}, omega_{-2}, ...`
    targets_neg: Vec<f64>,
    acc_pos: CompensatedSum,
    acc_neg: CompensatedSum,
}

/// Fresh environment with nothing materialized beyond `omega_0 = 0`.
pub fn build_environment(dist: &GapDistribution, seed: u64) -> Environment {
    Environment::with_source(
        GapSource::Random {
            dist: dist.clone(),
            base: rng::keyed(seed),
        },
        seed,
    )
}

impl Environment {
    fn with_source(source: GapSource, seed: u64) -> Self {
        Self {
            source,
            seed,
            gaps_pos: Vec::new(),
            gaps_neg: Vec::new(),
            targets_pos: Vec::new(),
            targets_neg: Vec::new(),
            acc_pos: CompensatedSum::default(),
            acc_neg: CompensatedSum::default(),
        }
    }

    /// Deterministic fixture: `positive = [zeta_1, zeta_2, ...]`,
    /// `non_positive = [zeta_0, zeta_{-1}, ...]`.
    ///
    /// # Panics
    /// Querying a gap outside the listed range panics.
    pub fn from_gaps(positive: Vec<f64>, non_positive: Vec<f64>) -> Self {
        assert!(
            positive.iter().chain(&non_positive).all(|&g| g > 0.0),
            "fixture gaps must be positive"
        );
        Self::with_source(
            GapSource::Fixed {
                pos: positive,
                neg: non_positive,
            },
            0,
        )
    }

    /// Fixture with every gap equal to `gap`, so `omega_k = gap * k`.
    pub fn constant(gap: f64) -> Self {
        assert!(gap > 0.0, "fixture gap must be positive");
        Self::with_source(GapSource::Constant(gap), 0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Range `[k_min, k_max]` of targets currently materialized.
    pub fn extent(&self) -> (i64, i64) {
        (-(self.targets_neg.len() as i64), self.targets_pos.len() as i64)
    }

    fn draw(&self, k: i64) -> f64 {
        match &self.source {
            GapSource::Random { dist, base } => {
                let mut r = base.clone();
                r.set_stream(k as u64);
                sample_gap(dist, &mut r)
            }
            GapSource::Fixed { pos, neg } => {
                let g = if k >= 1 {
                    pos.get((k - 1) as usize)
                } else {
                    neg.get((-k) as usize)
                };
                *g.unwrap_or_else(|| panic!("fixture environment has no gap at index {k}"))
            }
            GapSource::Constant(g) => *g,
        }
    }

    /// Materializes targets `omega_{lo} ..= omega_{hi}`.
    pub fn ensure(&mut self, lo: i64, hi: i64) {
        while (self.targets_pos.len() as i64) < hi {
            let k = self.targets_pos.len() as i64 + 1;
            let g = self.draw(k);
            self.gaps_pos.push(g);
            self.acc_pos.add(g);
            self.targets_pos.push(self.acc_pos.value());
        }
        while -(self.targets_neg.len() as i64) > lo {
            // omega_{-m} = omega_{-m+1} - zeta_{-m+1}
            let k = -(self.gaps_neg.len() as i64);
            let g = self.draw(k);
            self.gaps_neg.push(g);
            self.acc_neg.add(g);
            self.targets_neg.push(-self.acc_neg.value());
        }
    }

    /// `omega_k`.
    pub fn target(&mut self, k: i64) -> f64 {
        match k {
            0 => 0.0,
            k if k > 0 => {
                self.ensure(0, k);
                self.targets_pos[(k - 1) as usize]
            }
            k => {
                self.ensure(k, 0);
                self.targets_neg[(-k - 1) as usize]
            }
        }
    }

    /// `zeta_k`, the length of the gap `[omega_{k-1}, omega_k]`.
    pub fn gap(&mut self, k: i64) -> f64 {
        if k >= 1 {
            self.ensure(0, k);
            self.gaps_pos[(k - 1) as usize]
        } else {
            // zeta_k is materialized together with omega_{k-1}
            self.ensure(k - 1, 0);
            self.gaps_neg[(-k) as usize]
        }
    }

    /// `omega_k` if already materialized.
    pub fn target_cached(&self, k: i64) -> Option<f64> {
        match k {
            0 => Some(0.0),
            k if k > 0 => self.targets_pos.get((k - 1) as usize).copied(),
            k => self.targets_neg.get((-k - 1) as usize).copied(),
        }
    }
}
