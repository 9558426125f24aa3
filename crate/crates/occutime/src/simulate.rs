//! Monte Carlo oracle: exact event-driven sampling of the time spent in
//! state 0 over a horizon, with deterministic per-replica random streams so
//! results are bit-identical for any worker count.

use thiserror::Error;

use crate::chain::GeneratorMatrix;
use crate::quad::gauss5;
use crate::transforms::OccupationDensity;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("sample horizon {sample:?} does not match density horizon {analytic:?}")]
    HorizonMismatch { sample: f64, analytic: f64 },
}

/// Samples beyond this count are summarized rather than retained.
const SAMPLE_RETENTION_CAP: usize = 10_000_000;

/// splitmix64 step: passes standard mixing tests and gives independent
/// streams from any 64-bit state, which is all the sampler needs.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    /// Stream for replica `index` of run `seed`; distinct (seed, index)
    /// pairs decorrelate through the two mixing rounds.
    pub fn for_replica(seed: u64, index: u64) -> Self {
        let mut r = Rng {
            state: seed ^ index.wrapping_mul(0x9e3779b97f4a7c15),
        };
        r.next_u64();
        r.next_u64();
        r
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in (0, 1]; never 0 so `ln` below is safe.
    pub fn next_unit(&mut self) -> f64 {
        let bits = self.next_u64() >> 11;
        (bits as f64 + 1.0) / 9007199254740992.0
    }

    /// Exp(rate) holding time by inversion.
    pub fn next_exponential(&mut self, rate: f64) -> f64 {
        -self.next_unit().ln() / rate
    }
}

/// Jump chain of a generator: per-state exit rate and cumulative jump
/// probabilities, precomputed once per simulation run.
struct JumpTable {
    exit: Vec<f64>,
    // row j holds (cumulative probability, target state)
    targets: Vec<Vec<(f64, usize)>>,
}

impl JumpTable {
    fn new(q: &GeneratorMatrix) -> Self {
        let n = q.dim();
        let mut exit = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for j in 0..n {
            let qj = -q.entry(j, j);
            exit.push(qj);
            let mut row = Vec::new();
            let mut cum = 0.0;
            for k in 0..n {
                if k != j && q.entry(j, k) > 0.0 {
                    cum += q.entry(j, k) / qj;
                    row.push((cum, k));
                }
            }
            // guard against roundoff leaving the last cumulative below 1
            if let Some(last) = row.last_mut() {
                last.0 = 1.0;
            }
            targets.push(row);
        }
        JumpTable { exit, targets }
    }

    fn next_state(&self, from: usize, u: f64) -> usize {
        let row = &self.targets[from];
        for &(cum, k) in row {
            if u <= cum {
                return k;
            }
        }
        row.last().expect("irreducible chain has exits").1
    }
}

fn sample_with_table(table: &JumpTable, start: usize, t: f64, rng: &mut Rng) -> f64 {
    let mut state = start;
    let mut clock = 0.0;
    let mut occupied = 0.0;
    loop {
        let hold = rng.next_exponential(table.exit[state]);
        if clock + hold >= t {
            if state == 0 {
                occupied += t - clock;
            }
            // a path that never leaves state 0 returns the horizon exactly
            return if occupied >= t { t } else { occupied };
        }
        if state == 0 {
            occupied += hold;
        }
        clock += hold;
        state = table.next_state(state, rng.next_unit());
    }
}

/// One exact trajectory: Exp(q_j) holding times, jump probabilities
/// `q_{jk}/q_j`, stopped at the horizon. Returns the time spent in state 0.
pub fn sample_occupation(q: &GeneratorMatrix, start: usize, t: f64, rng: &mut Rng) -> f64 {
    assert!(t > 0.0, "horizon must be positive");
    assert!(start < q.dim(), "start state out of range");
    sample_with_table(&JumpTable::new(q), start, t, rng)
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    samples: Vec<f64>,
    n: usize,
    seed: u64,
    t: f64,
    atom_count: usize,
    sum: f64,
}

impl SimulationResult {
    /// Retained samples; shorter than `n` only past the retention cap.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    /// Fraction of trajectories that never left state 0.
    pub fn atom_fraction(&self) -> f64 {
        self.atom_count as f64 / self.n as f64
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
}

fn worker_count(n: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |p| p.get());
    let cap = std::env::var("OCCUTIME_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(available);
    cap.min(available).min(n).max(1)
}

/// `n` independent occupation-time samples. Replica `i` draws from a stream
/// derived from `(seed, i)`, so the sample vector is bit-identical for any
/// thread count; threads only decide which contiguous index ranges run where.
pub fn monte_carlo(
    q: &GeneratorMatrix,
    start: usize,
    t: f64,
    n: usize,
    seed: u64,
) -> SimulationResult {
    assert!(n >= 1, "need at least one replica");
    assert!(t > 0.0, "horizon must be positive");
    assert!(start < q.dim(), "start state out of range");
    let table = JumpTable::new(q);
    let retain = n.min(SAMPLE_RETENTION_CAP);
    let workers = worker_count(n);

    // each chunk returns (retained samples, atom count, sum)
    let chunk = n.div_ceil(workers);
    let results: Vec<(Vec<f64>, usize, f64)> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let lo = w * chunk;
            let hi = ((w + 1) * chunk).min(n);
            if lo >= hi {
                break;
            }
            let table = &table;
            handles.push(scope.spawn(move || {
                let mut samples = Vec::with_capacity((hi - lo).min(retain));
                let mut atoms = 0;
                let mut sum = 0.0;
                for i in lo..hi {
                    let mut rng = Rng::for_replica(seed, i as u64);
                    let s = sample_with_table(table, start, t, &mut rng);
                    if s == t {
                        atoms += 1;
                    }
                    sum += s;
                    if i < retain {
                        samples.push(s);
                    }
                }
                (samples, atoms, sum)
            }));
        }
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut samples = Vec::with_capacity(retain);
    let mut atom_count = 0;
    let mut sum = 0.0;
    for (s, a, sm) in results {
        samples.extend_from_slice(&s);
        atom_count += a;
        sum += sm;
    }
    SimulationResult {
        samples,
        n,
        seed,
        t,
        atom_count,
        sum,
    }
}

/// Kolmogorov-Smirnov distance between the empirical distribution and the
/// analytic law (continuous density plus an atom at the horizon). The
/// analytic CDF is accumulated by panel quadrature between consecutive
/// sorted sample points.
pub fn ks_distance(
    result: &SimulationResult,
    analytic: &OccupationDensity,
) -> Result<f64, SimulateError> {
    if (result.t - analytic.horizon()).abs() > 1e-12 * result.t {
        return Err(SimulateError::HorizonMismatch {
            sample: result.t,
            analytic: analytic.horizon(),
        });
    }
    let t = result.t;
    let mut sorted: Vec<f64> = result
        .samples
        .iter()
        .copied()
        .filter(|&s| s < t)
        .collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = result.samples.len() as f64;

    let f = |x: f64| analytic.eval(x);
    let mut sup: f64 = 0.0;
    let mut cdf = 0.0;
    let mut prev = 0.0;
    let mut below = 0usize; // count of samples strictly below the current point
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut ties = 1;
        while i + ties < sorted.len() && sorted[i + ties] == x {
            ties += 1;
        }
        cdf += panel_integral(&f, prev, x);
        prev = x;
        // empirical CDF jumps from below/n to (below+ties)/n at x
        sup = sup.max((cdf - below as f64 / n).abs());
        below += ties;
        sup = sup.max((cdf - below as f64 / n).abs());
        i += ties;
    }
    // at the horizon both laws jump to 1; compare the pre-jump values
    cdf += panel_integral(&f, prev, t);
    sup = sup.max((cdf - below as f64 / n).abs());
    // mismatch between the empirical and analytic atom masses
    sup = sup.max(((1.0 - result.atom_fraction()) - cdf).abs());
    Ok(sup)
}

/// Integral over one inter-sample panel. Panels between consecutive order
/// statistics are tiny, so a midpoint rule is already exact to far below
/// the KS resolution; wide panels fall back to piecewise 5-point Gauss.
fn panel_integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if b - a < 1e-3 {
        return (b - a) * f(0.5 * (a + b));
    }
    let pieces = ((b - a) * 64.0).ceil() as usize;
    let step = (b - a) / pieces as f64;
    let mut acc = 0.0;
    for p in 0..pieces {
        let lo = a + p as f64 * step;
        acc += gauss5(&f, lo, lo + step);
    }
    acc
}
