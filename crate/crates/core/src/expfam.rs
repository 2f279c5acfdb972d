//! Exponential-family edge weights.
//!
//! The binary model is a special case of edges drawn from a one-parameter
//! exponential family f(x|θ) = h(x)·exp(θ·T(x) − 𝒜(θ)) with a natural
//! parameter per block pair. Matching and nomination only ever consume the
//! natural-parameter pattern matrix and log-density differences, so any
//! family implementing [`EdgeFamily`] plugs into the same pipeline.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sbm::{sigmoid, BlockAssignment, Graph};

/// A one-parameter exponential family over edge weights in natural form.
pub trait EdgeFamily: Clone {
    /// Sufficient statistic T(x).
    fn sufficient_stat(&self, x: f64) -> f64;

    /// Log-normalizer 𝒜(θ) (cumulant function).
    fn log_normalizer(&self, theta: f64) -> f64;

    /// Log base measure ln h(x); cancels in likelihood ratios at fixed x.
    fn log_base_measure(&self, x: f64) -> f64;

    /// Mean edge weight E[X] = 𝒜'(θ).
    fn mean(&self, theta: f64) -> f64;

    /// Draw one edge weight at natural parameter θ.
    fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64;

    /// Whether every draw lies in {0,1}.
    fn is_binary(&self) -> bool;

    /// Log-density ln f(x|θ).
    fn log_density(&self, x: f64, theta: f64) -> f64 {
        self.log_base_measure(x) + theta * self.sufficient_stat(x) - self.log_normalizer(theta)
    }
}

/// Bernoulli edges: T(x) = x, 𝒜(θ) = ln(1 + e^θ), mean = logistic(θ).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bernoulli;

impl EdgeFamily for Bernoulli {
    fn sufficient_stat(&self, x: f64) -> f64 {
        x
    }

    fn log_normalizer(&self, theta: f64) -> f64 {
        // ln(1+e^θ) computed stably on both tails.
        if theta > 0.0 {
            theta + (-theta).exp().ln_1p()
        } else {
            theta.exp().ln_1p()
        }
    }

    fn log_base_measure(&self, _x: f64) -> f64 {
        0.0
    }

    fn mean(&self, theta: f64) -> f64 {
        sigmoid(theta)
    }

    fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        if rng.random_bool(sigmoid(theta)) {
            1.0
        } else {
            0.0
        }
    }

    fn is_binary(&self) -> bool {
        true
    }
}

/// Binomial edges with a fixed trial count: T(x) = x,
/// 𝒜(θ) = N·ln(1 + e^θ), mean = N·logistic(θ).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binomial {
    trials: u32,
}

impl Binomial {
    pub fn new(trials: u32) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidInput(
                "binomial edge family needs at least one trial".into(),
            ));
        }
        Ok(Binomial { trials })
    }

    pub fn trials(&self) -> u32 {
        self.trials
    }
}

impl EdgeFamily for Binomial {
    fn sufficient_stat(&self, x: f64) -> f64 {
        x
    }

    fn log_normalizer(&self, theta: f64) -> f64 {
        self.trials as f64 * Bernoulli.log_normalizer(theta)
    }

    fn log_base_measure(&self, x: f64) -> f64 {
        // ln C(N, x) via log-gamma of factorials; x is an integer count.
        let n = self.trials as f64;
        ln_factorial(n) - ln_factorial(x) - ln_factorial(n - x)
    }

    fn mean(&self, theta: f64) -> f64 {
        self.trials as f64 * sigmoid(theta)
    }

    fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        let p = sigmoid(theta);
        (0..self.trials).filter(|_| rng.random_bool(p)).count() as f64
    }

    fn is_binary(&self) -> bool {
        self.trials == 1
    }
}

/// ln(k!) for small non-negative integers (edge trial counts are small).
fn ln_factorial(k: f64) -> f64 {
    let k = k.round() as u64;
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// A block model whose edges come from an exponential family: block sizes
/// plus a symmetric K×K natural-parameter matrix Θ.
#[derive(Debug, Clone)]
pub struct ExpFamilyModel<F: EdgeFamily> {
    block_sizes: Vec<usize>,
    theta: DMatrix<f64>,
    family: F,
}

impl<F: EdgeFamily> ExpFamilyModel<F> {
    pub fn new(block_sizes: Vec<usize>, theta: DMatrix<f64>, family: F) -> Result<Self> {
        let k = block_sizes.len();
        if k == 0 {
            return Err(Error::InvalidInput("at least one block required".into()));
        }
        if block_sizes.contains(&0) {
            return Err(Error::InvalidInput("block sizes must be positive".into()));
        }
        if theta.nrows() != k || theta.ncols() != k {
            return Err(Error::Dimension(format!(
                "natural-parameter matrix is {}x{}, expected {}x{}",
                theta.nrows(),
                theta.ncols(),
                k,
                k
            )));
        }
        for i in 0..k {
            for j in 0..k {
                if !theta[(i, j)].is_finite() {
                    return Err(Error::InvalidInput(
                        "natural parameters must be finite".into(),
                    ));
                }
                if theta[(i, j)] != theta[(j, i)] {
                    return Err(Error::InvalidInput(
                        "natural-parameter matrix must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(ExpFamilyModel {
            block_sizes,
            theta,
            family,
        })
    }

    pub fn k(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn n(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn family(&self) -> &F {
        &self.family
    }

    /// The n×n pattern matrix with entry θ_{b(i)b(j)} and a zero diagonal —
    /// the generalization of the binary model's log-odds matrix.
    pub fn natural_pattern(&self, assignment: &BlockAssignment) -> Result<DMatrix<f64>> {
        if assignment.k() != self.k() || assignment.counts() != self.block_sizes {
            return Err(Error::Dimension(
                "assignment block counts do not match the model's block sizes".into(),
            ));
        }
        let n = self.n();
        let mut b = DMatrix::from_fn(n, n, |i, j| {
            self.theta[(assignment.label(i), assignment.label(j))]
        });
        for i in 0..n {
            b[(i, i)] = 0.0;
        }
        Ok(b)
    }
}

/// Sample a graph whose edge weights are independent draws from the model's
/// edge family at the block-pair parameters.
pub fn sample_exp_sbm<F: EdgeFamily, R: Rng + ?Sized>(
    model: &ExpFamilyModel<F>,
    assignment: &BlockAssignment,
    rng: &mut R,
) -> Result<Graph> {
    if assignment.k() != model.k() || assignment.counts() != model.block_sizes() {
        return Err(Error::Dimension(
            "assignment block counts do not match the model's block sizes".into(),
        ));
    }
    let n = model.n();
    let mut adj = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let theta = model.theta()[(assignment.label(i), assignment.label(j))];
            let w = model.family().sample(theta, rng);
            adj[(i, j)] = w;
            adj[(j, i)] = w;
        }
    }
    Graph::new(adj, !model.family().is_binary())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{logit, sample_sbm, BlockModel};
    use approx::assert_relative_eq;

    /// The mean must equal the derivative of the log-normalizer; check the
    /// closed forms against a central finite difference.
    fn check_moment_identity<F: EdgeFamily>(family: &F, thetas: &[f64]) {
        let h = 1e-5;
        for &theta in thetas {
            let numeric =
                (family.log_normalizer(theta + h) - family.log_normalizer(theta - h)) / (2.0 * h);
            assert_relative_eq!(family.mean(theta), numeric, epsilon = 1e-6);
        }
    }

    #[test]
    fn moment_identity_bernoulli() {
        check_moment_identity(&Bernoulli, &[-3.0, -0.5, 0.0, 0.7, 2.5]);
    }

    #[test]
    fn moment_identity_binomial() {
        let fam = Binomial::new(7).unwrap();
        check_moment_identity(&fam, &[-2.0, 0.0, 1.3]);
    }

    #[test]
    fn densities_normalize() {
        // Bernoulli masses at {0,1} and binomial masses at {0..N} sum to 1.
        for theta in [-1.5, 0.0, 0.8] {
            let b = Bernoulli;
            let total = b.log_density(0.0, theta).exp() + b.log_density(1.0, theta).exp();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);

            let fam = Binomial::new(5).unwrap();
            let total: f64 = (0..=5)
                .map(|x| fam.log_density(x as f64, theta).exp())
                .sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_parameter_is_symmetric_coin() {
        assert_relative_eq!(Bernoulli.mean(0.0), 0.5);
        assert_relative_eq!(Bernoulli.log_density(0.0, 0.0).exp(), 0.5);
        assert_relative_eq!(Bernoulli.log_density(1.0, 0.0).exp(), 0.5);
    }

    #[test]
    fn bernoulli_family_matches_binary_sampler() {
        // Sampling the exponential-family model at θ = logit(Λ) and the
        // binary sampler at Λ must produce the same edge frequencies.
        let lambda = DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.2, 0.5]);
        let theta = lambda.map(logit);
        let sizes = vec![5, 5];
        let assignment = BlockAssignment::sorted(&sizes);
        let bin_model = BlockModel::new(sizes.clone(), lambda.clone()).unwrap();
        let exp_model = ExpFamilyModel::new(sizes, theta, Bernoulli).unwrap();

        let mut rng = crate::rng::stream(21, &[0]);
        let reps = 4000;
        let mut freq = [DMatrix::<f64>::zeros(2, 2), DMatrix::<f64>::zeros(2, 2)];
        let mut pairs = DMatrix::<f64>::zeros(2, 2);
        for r in 0..reps {
            let g0 = sample_sbm(&bin_model, &assignment, &mut rng).unwrap();
            let g1 = sample_exp_sbm(&exp_model, &assignment, &mut rng).unwrap();
            assert!(!g1.weighted());
            for i in 0..10 {
                for j in (i + 1)..10 {
                    let (p, q) = (assignment.label(i), assignment.label(j));
                    freq[0][(p, q)] += g0.adjacency()[(i, j)];
                    freq[1][(p, q)] += g1.adjacency()[(i, j)];
                    if r == 0 {
                        pairs[(p, q)] += 1.0;
                    }
                }
            }
        }
        for p in 0..2 {
            for q in p..2 {
                let f0 = freq[0][(p, q)] / (reps as f64 * pairs[(p, q)]);
                let f1 = freq[1][(p, q)] / (reps as f64 * pairs[(p, q)]);
                assert!(
                    (f0 - lambda[(p, q)]).abs() < 0.02 && (f1 - lambda[(p, q)]).abs() < 0.02,
                    "block pair ({p},{q}): frequencies {f0}, {f1} vs {}",
                    lambda[(p, q)]
                );
            }
        }
    }

    #[test]
    fn binomial_sample_moments() {
        let fam = Binomial::new(6).unwrap();
        let theta = 0.4;
        let mut rng = crate::rng::stream(22, &[0]);
        let draws = 20_000;
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for _ in 0..draws {
            let x = fam.sample(theta, &mut rng);
            assert!((0.0..=6.0).contains(&x) && x.fract() == 0.0);
            sum += x;
            max = max.max(x);
        }
        assert!(max <= 6.0);
        assert_relative_eq!(sum / draws as f64, fam.mean(theta), epsilon = 0.05);
    }

    #[test]
    fn exp_model_pattern_matches_log_odds() {
        // For Bernoulli edges the natural pattern equals the log-odds matrix.
        let lambda = DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.2, 0.5]);
        let theta = lambda.map(logit);
        let sizes = vec![3, 2];
        let assignment = BlockAssignment::sorted(&sizes);
        let model = ExpFamilyModel::new(sizes, theta, Bernoulli).unwrap();
        let pattern = model.natural_pattern(&assignment).unwrap();
        let b = crate::sbm::log_odds(&lambda, &assignment, 2).unwrap();
        assert_relative_eq!(pattern, *b.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn binomial_graph_is_weighted() {
        let fam = Binomial::new(4).unwrap();
        let theta = DMatrix::from_element(1, 1, 0.0);
        let model = ExpFamilyModel::new(vec![6], theta, fam).unwrap();
        let assignment = BlockAssignment::sorted(&[6]);
        let mut rng = crate::rng::stream(23, &[0]);
        let g = sample_exp_sbm(&model, &assignment, &mut rng).unwrap();
        assert!(g.weighted());
        assert!(g.adjacency().iter().all(|&w| (0.0..=4.0).contains(&w)));
    }
}
