//! Parallel/sequential execution of index-based sweeps.
//!
//! Grid kernels are expressed as pure functions of an index so that the
//! parallel and sequential paths produce bit-identical results: outputs are
//! collected in index order and reductions are performed on the collected
//! vector, never in scheduler order.

/// Which execution path a kernel runs on. `Auto` resolves to `Parallel` when
/// the `parallel` feature is enabled, `Sequential` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Auto,
    Parallel,
    Sequential,
}

impl Default for ExecMode {
    fn default() -> Self {
        ExecMode::Auto
    }
}

impl ExecMode {
    fn parallel(self) -> bool {
        match self {
            ExecMode::Auto => cfg!(feature = "parallel"),
            ExecMode::Parallel => cfg!(feature = "parallel"),
            ExecMode::Sequential => false,
        }
    }
}

/// Evaluates `f` at every index in `0..n`, returning results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if mode.parallel() {
        parallel_map(n, &f)
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: &F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: &F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}

/// Minimum of `f` over `0..n`. NaN values are rejected as an internal error
/// upstream; here they would poison the reduction, so the kernel must not
/// produce them.
pub fn min_indexed<F>(mode: ExecMode, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    map_indexed(mode, n, f)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Maximum of `f` over `0..n`.
pub fn max_indexed<F>(mode: ExecMode, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    map_indexed(mode, n, f)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Lattice of `res^dim` points covering the unit torus, visited
/// lexicographically. Index 0 is the origin, so fixed points of the example
/// maps are always on the grid.
#[derive(Debug, Clone, Copy)]
pub struct UnitGrid {
    pub dim: usize,
    pub res: usize,
}

impl UnitGrid {
    pub fn new(dim: usize, res: usize) -> Self {
        UnitGrid { dim, res }
    }

    pub fn len(&self) -> usize {
        self.res.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of lattice site `index`.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut out = vec![0.0; self.dim];
        for slot in out.iter_mut().rev() {
            *slot = (rem % self.res) as f64 / self.res as f64;
            rem /= self.res;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let f = |i: usize| ((i as f64) * 0.731).sin() * 1e3;
        let a = map_indexed(ExecMode::Parallel, 10_000, f);
        let b = map_indexed(ExecMode::Sequential, 10_000, f);
        assert_eq!(a, b);
        assert_eq!(
            min_indexed(ExecMode::Parallel, 10_000, f).to_bits(),
            min_indexed(ExecMode::Sequential, 10_000, f).to_bits()
        );
    }

    #[test]
    fn grid_visits_every_site_once() {
        let g = UnitGrid::new(3, 4);
        assert_eq!(g.len(), 64);
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..g.len() {
            let p = g.point(i);
            assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
            let key: Vec<u64> = p.iter().map(|x| (x * 4.0).round() as u64).collect();
            assert!(seen.insert(key));
        }
        assert_eq!(g.point(0), vec![0.0, 0.0, 0.0]);
    }
}
