//! Deterministic ground truth: the limiting degree distribution, the exact
//! recursion for expected degree counts, and the concentration bound
//! formulas.
//!
//! Nothing here is random. The expectation recursion gives `E N_t(d)` (the
//! expected number of degree-`d` vertices at time `t`) to floating-point
//! accuracy, which is what Monte Carlo runs are judged against.

use std::io::{self, Write};

use crate::edge_step::{EdgeStepSpec, VertexExpectation};
use crate::{Error, Result};

// Lanczos approximation of ln Gamma, g = 10.900511 with 11 coefficients;
// accurate to ~1e-14 relative over the range used here (arguments >= 0.5).
const GAMMA_R: f64 = 10.900511;
const GAMMA_DK: [f64; 11] = [
    2.48574089138753565546e-5,
    1.05142378581721974210,
    -3.45687097222016235469,
    4.51227709466894823700,
    -2.98285225323576655721,
    1.05639711577126713077,
    -1.95428773191645869583e-1,
    1.70970543404441224307e-2,
    -5.71926117404305781283e-4,
    4.63399473359905636708e-6,
    -2.71994908488607703910e-9,
];
// ln(2 sqrt(e/pi))
const LN_2_SQRT_E_OVER_PI: f64 = 0.6207822376352452223455184457816472122518527279025978;

fn ln_gamma(x: f64) -> f64 {
    assert!(x >= 0.5, "ln_gamma implemented for x >= 0.5, got {x}");
    let mut s = GAMMA_DK[0];
    for (i, dk) in GAMMA_DK.iter().enumerate().skip(1) {
        s += dk / (x - 1.0 + i as f64);
    }
    s.ln() + LN_2_SQRT_E_OVER_PI + (x - 0.5) * ((x - 0.5 + GAMMA_R) / std::f64::consts::E).ln()
}

// Stirling tail S(z) with ln Gamma(z) = (z - 1/2) ln z - z + ln(2 pi)/2 + S(z).
fn stirling_tail(z: f64) -> f64 {
    let w = 1.0 / (z * z);
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - w / 1680.0) * w) * w) / z
}

/// `ln Gamma(x + a) - ln Gamma(x)` for `x >= 1`, `a` in (0, 2], without the
/// catastrophic cancellation a naive difference suffers at large `x` (both
/// terms grow like `x ln x` while the difference stays near `a ln x`).
fn ln_gamma_ratio(x: f64, a: f64) -> f64 {
    if x < 16.0 {
        return ln_gamma(x + a) - ln_gamma(x);
    }
    (x - 0.5) * (a / x).ln_1p() + a * ((x + a).ln() - 1.0) + stirling_tail(x + a)
        - stirling_tail(x)
}

/// The limiting degree distribution with tail exponent `2 - gamma`:
/// `p(d) = (1-gamma) Gamma(2-gamma) Gamma(d) / Gamma(d+2-gamma)`.
///
/// The total mass telescopes to exactly 1 for every `gamma` in [0, 1) (the
/// partial sum through `D` is `1 - Gamma(2-gamma) Gamma(D+1) / Gamma(D+2-gamma)`),
/// but for `gamma > 0` the tail is so heavy that the mean diverges: the
/// graph's edge mass concentrates on vertices of diverging degree even
/// though every fixed degree keeps a positive share of vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitDistribution {
    gamma: f64,
}

impl LimitDistribution {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma < 1.0) {
            return Err(Error::Domain(format!(
                "limit distribution requires gamma in [0, 1), got {gamma}"
            )));
        }
        Ok(LimitDistribution { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `p(d)` via log-Gamma differences, stable for arbitrarily large `d`.
    pub fn p(&self, d: u64) -> f64 {
        assert!(d >= 1, "degrees start at 1");
        self.tail_constant() * (-ln_gamma_ratio(d as f64, 2.0 - self.gamma)).exp()
    }

    /// `p(d)` by iterating `p(d) = (d-1)/(d+1-gamma) * p(d-1)` from
    /// `p(1) = (1-gamma)/(2-gamma)`; an independent cross-check of [`Self::p`].
    pub fn p_recursive(&self, d: u64) -> f64 {
        assert!(d >= 1, "degrees start at 1");
        let g = self.gamma;
        let mut p = (1.0 - g) / (2.0 - g);
        for k in 2..=d {
            p *= (k - 1) as f64 / ((k + 1) as f64 - g);
        }
        p
    }

    /// `(1-gamma) Gamma(2-gamma)`, the constant in `p(d) ~ C d^-(2-gamma)`.
    pub fn tail_constant(&self) -> f64 {
        (1.0 - self.gamma) * ln_gamma(2.0 - self.gamma).exp()
    }

    /// Partial mass `sum_{d<=d_cut} p(d)` in closed form (telescoping).
    pub fn mass_through(&self, d_cut: u64) -> f64 {
        1.0 - self.escaped_mass_beyond(d_cut)
    }

    /// `1 - sum_{d<=d_cut} p(d) = Gamma(2-gamma) Gamma(d_cut+1) / Gamma(d_cut+2-gamma)`,
    /// the mass sitting above the cutoff; decays like `d_cut^-(1-gamma)`.
    pub fn escaped_mass_beyond(&self, d_cut: u64) -> f64 {
        let x = (d_cut + 1) as f64;
        ln_gamma(2.0 - self.gamma).exp() * (-ln_gamma_ratio(x, 1.0 - self.gamma)).exp()
    }
}

/// Free-function form of [`LimitDistribution::p`].
pub fn p_gamma(gamma: f64, d: u64) -> Result<f64> {
    Ok(LimitDistribution::new(gamma)?.p(d))
}

/// Free-function form of [`LimitDistribution::p_recursive`].
pub fn p_gamma_recursive(gamma: f64, d: u64) -> Result<f64> {
    Ok(LimitDistribution::new(gamma)?.p_recursive(d))
}

/// Exact expected degree counts `E N_t(d)` for `1 <= d <= d_max` at the
/// requested checkpoint times, plus `F(t)` and truncated-mass accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationTable {
    spec: EdgeStepSpec,
    d_max: usize,
    checkpoints: Vec<u64>,
    rows: Vec<Vec<f64>>,
    f_values: Vec<f64>,
    truncated_mass: Vec<f64>,
}

/// Fraction of `F(t)` that may sit above `d_max` before the table flags
/// itself as truncated.
pub const TRUNCATION_WARNING_FRACTION: f64 = 1e-6;

/// Advances the expectation recursion from the initial graph (one vertex
/// carrying one loop, so `E N_1(2) = 1`) and records rows at each checkpoint.
///
/// One step `t -> t+1` moves mass only upward, between degrees at most two
/// apart. With `f = f(t+1)` and `q = 1 - f`, a degree-`d` vertex keeps its
/// degree with probability `(1 - d/(2t))(1 - q d/(2t))`, gains exactly one
/// (from the vertex-step endpoint or one edge-step endpoint) with probability
/// `(2-f) d/(2t) - 2q (d/(2t))^2`, and gains two (an edge-step loop) with
/// probability `q (d/(2t))^2`; a fresh degree-1 vertex arrives with
/// probability `f`. The three coefficients are exact probabilities of
/// disjoint events, so every entry stays non-negative and the row mass and
/// degree sums are conserved.
///
/// Because mass never moves downward, entries at `d <= d_max` are exact even
/// when `d_max` truncates the support; the lost mass above `d_max` is
/// reported per checkpoint as `F(t)` minus the retained row mass.
pub fn evolve_expectations(
    spec: EdgeStepSpec,
    checkpoints: &[u64],
    d_max: usize,
) -> Result<ExpectationTable> {
    spec.validate()?;
    if d_max < 2 {
        return Err(Error::Domain(format!("d_max must be >= 2, got {d_max}")));
    }
    for pair in checkpoints.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Domain(format!(
                "checkpoints must be strictly ascending, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if let Some(&first) = checkpoints.first() {
        if first < 1 {
            return Err(Error::Domain("checkpoints must be >= 1".into()));
        }
    }

    let mut counts = vec![0.0f64; d_max];
    counts[1] = 1.0; // E N_1(2) = 1
    let mut t = 1u64;
    let mut f_running = 1.0f64;

    let mut table = ExpectationTable {
        spec,
        d_max,
        checkpoints: Vec::with_capacity(checkpoints.len()),
        rows: Vec::with_capacity(checkpoints.len()),
        f_values: Vec::with_capacity(checkpoints.len()),
        truncated_mass: Vec::with_capacity(checkpoints.len()),
    };

    for &ck in checkpoints {
        while t < ck {
            let f = spec.evaluate(t + 1);
            let q = 1.0 - f;
            let inv2t = 0.5 / t as f64;
            // New entries depend on old values at d, d-1, d-2, so a
            // descending in-place sweep sees exactly the old values.
            let window = d_max.min(2 * (t as usize + 1));
            for d in (1..=window).rev() {
                let scaled = d as f64 * inv2t;
                let stay = (1.0 - scaled) * (1.0 - q * scaled);
                let mut next = stay * counts[d - 1];
                if d >= 2 {
                    let e = (d - 1) as f64 * inv2t;
                    next += e * ((2.0 - f) - 2.0 * q * e) * counts[d - 2];
                }
                if d >= 3 {
                    let e = (d - 2) as f64 * inv2t;
                    next += q * e * e * counts[d - 3];
                }
                counts[d - 1] = next;
            }
            counts[0] += f;
            f_running += f;
            t += 1;
        }
        let retained: f64 = counts.iter().sum();
        table.checkpoints.push(ck);
        table.rows.push(counts.clone());
        table.f_values.push(f_running);
        table.truncated_mass.push((f_running - retained).max(0.0));
    }
    Ok(table)
}

impl ExpectationTable {
    pub fn spec(&self) -> EdgeStepSpec {
        self.spec
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }

    fn index_of(&self, t: u64) -> Result<usize> {
        self.checkpoints
            .iter()
            .position(|&c| c == t)
            .ok_or(Error::MissingCheckpoint(t))
    }

    /// `E N_t(d)`.
    pub fn expected_count(&self, t: u64, d: u64) -> Result<f64> {
        let i = self.index_of(t)?;
        if d < 1 || d > self.d_max as u64 {
            return Err(Error::Domain(format!(
                "d={d} outside table range 1..={}",
                self.d_max
            )));
        }
        Ok(self.rows[i][(d - 1) as usize])
    }

    /// `F(t)` as accumulated during evolution.
    pub fn f_at(&self, t: u64) -> Result<f64> {
        Ok(self.f_values[self.index_of(t)?])
    }

    /// `E N_t(d) / F(t)`, the deterministic counterpart of the empirical
    /// degree fraction.
    pub fn ratio(&self, t: u64, d: u64) -> Result<f64> {
        Ok(self.expected_count(t, d)? / self.f_at(t)?)
    }

    /// Mass above `d_max` at checkpoint `t` (zero when the support fits).
    pub fn truncated_mass_at(&self, t: u64) -> Result<f64> {
        Ok(self.truncated_mass[self.index_of(t)?])
    }

    /// True when any checkpoint lost more than
    /// [`TRUNCATION_WARNING_FRACTION`] of its mass to the `d_max` cutoff.
    pub fn truncation_warning(&self) -> bool {
        self.truncated_mass
            .iter()
            .zip(&self.f_values)
            .any(|(&lost, &f)| lost > TRUNCATION_WARNING_FRACTION * f)
    }

    /// CSV rows `t,d,expected_count,F_t,ratio`, t ascending then d ascending,
    /// preceded by a `# spec:` comment that pins the generating function.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# spec: {}", self.spec.to_kv())?;
        writeln!(w, "t,d,expected_count,F_t,ratio")?;
        for (i, &t) in self.checkpoints.iter().enumerate() {
            let f = self.f_values[i];
            for (j, &count) in self.rows[i].iter().enumerate() {
                writeln!(w, "{},{},{:?},{:?},{:?}", t, j + 1, count, f, count / f)?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("CSV output is UTF-8")
    }

    /// Rebuilds a table from its CSV form. `spec` is the function the caller
    /// expects the table to describe: a `# spec:` comment that disagrees, or
    /// (absent the comment) `F_t` values inconsistent with `spec`, fail with
    /// a domain error, while structural problems fail with a parse error.
    pub fn read_csv(text: &str, spec: EdgeStepSpec) -> Result<Self> {
        let mut embedded: Option<EdgeStepSpec> = None;
        let mut data: Vec<(u64, u64, f64, f64)> = Vec::new();
        let mut saw_header = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(kv) = rest.trim().strip_prefix("spec:") {
                    embedded = Some(EdgeStepSpec::parse_kv(kv.trim())?);
                }
                continue;
            }
            if !saw_header {
                if line != "t,d,expected_count,F_t,ratio" {
                    return Err(Error::Parse(format!("unexpected CSV header `{line}`")));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!("expected 5 fields, got `{line}`")));
            }
            let t: u64 = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad t in `{line}`")))?;
            let d: u64 = fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad d in `{line}`")))?;
            let count: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Parse(format!("bad expected_count in `{line}`")))?;
            let f: f64 = fields[3]
                .parse()
                .map_err(|_| Error::Parse(format!("bad F_t in `{line}`")))?;
            data.push((t, d, count, f));
        }
        if !saw_header || data.is_empty() {
            return Err(Error::Parse("table CSV has no data rows".into()));
        }
        if let Some(found) = embedded {
            if found != spec {
                return Err(Error::Domain(format!(
                    "table was built for `{found}`, expected `{spec}`"
                )));
            }
        }

        let d_max = data.iter().map(|&(_, d, _, _)| d).max().unwrap() as usize;
        let mut table = ExpectationTable {
            spec,
            d_max,
            checkpoints: Vec::new(),
            rows: Vec::new(),
            f_values: Vec::new(),
            truncated_mass: Vec::new(),
        };
        for (t, d, count, f) in data {
            if table.checkpoints.last() != Some(&t) {
                if table.checkpoints.last().is_some_and(|&prev| t <= prev) {
                    return Err(Error::Parse(format!("checkpoint {t} out of order")));
                }
                table.checkpoints.push(t);
                table.rows.push(Vec::with_capacity(d_max));
                table.f_values.push(f);
            }
            let row = table.rows.last_mut().unwrap();
            if d as usize != row.len() + 1 {
                return Err(Error::Parse(format!(
                    "degrees must be contiguous from 1; got d={d} at t={t}"
                )));
            }
            if f != *table.f_values.last().unwrap() {
                return Err(Error::Parse(format!("inconsistent F_t within t={t}")));
            }
            row.push(count);
        }
        if table.rows.iter().any(|r| r.len() != d_max) {
            return Err(Error::Parse("ragged table: unequal d ranges per t".into()));
        }
        if embedded.is_none() {
            let reference = VertexExpectation::new(spec);
            for (&t, &f) in table.checkpoints.iter().zip(&table.f_values) {
                let want = reference.at(t);
                if (f - want).abs() > 1e-6 * want {
                    return Err(Error::Domain(format!(
                        "table F({t}) = {f} does not match the requested function ({want})"
                    )));
                }
            }
        }
        for (i, row) in table.rows.iter().enumerate() {
            let retained: f64 = row.iter().sum();
            table
                .truncated_mass
                .push((table.f_values[i] - retained).max(0.0));
        }
        Ok(table)
    }
}

/// Concentration band for one degree cell: `(halfwidth, condition_ok,
/// failure_prob)` where `halfwidth = 10 d A / sqrt((1-gamma) F(t))`, the
/// condition checks `A < sqrt(F(t)/(1-gamma)) / (4 d ln t)` (the regime in
/// which the band is proved), and `failure_prob = 3 exp(-A^2/3)`.
pub fn concentration_halfwidth(
    expectation: &VertexExpectation,
    t: u64,
    d: u64,
    a: f64,
) -> Result<(f64, bool, f64)> {
    let gamma = expectation.spec().gamma();
    if gamma >= 1.0 {
        return Err(Error::UnsupportedRegime(format!(
            "concentration band requires gamma < 1, got {gamma}"
        )));
    }
    if t < 2 {
        return Err(Error::Domain("concentration band requires t >= 2".into()));
    }
    if d < 1 {
        return Err(Error::Domain("degrees start at 1".into()));
    }
    if !(a > 0.0) {
        return Err(Error::Domain(format!("A must be positive, got {a}")));
    }
    let f_t = expectation.at(t);
    let scale = (f_t / (1.0 - gamma)).sqrt();
    let halfwidth = 10.0 * d as f64 * a / ((1.0 - gamma) * f_t).sqrt();
    let condition_ok = a < scale / (4.0 * d as f64 * (t as f64).ln());
    let failure_prob = 3.0 * (-a * a / 3.0).exp();
    Ok((halfwidth, condition_ok, failure_prob))
}

/// Two-sided deviation bound for `N_t(<=d)` at distance `lambda`:
/// `exp(-lambda^2 / (2 sigma^2 + 8 lambda/3)) + exp(-lambda^2 / (2 F(t) + 4 lambda/3))`
/// with `sigma^2 = 10 d^2 sum_{s<t} (F(s)+lambda)/s`.
pub fn general_concentration_bound(
    expectation: &VertexExpectation,
    t: u64,
    d: u64,
    lambda: f64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if t < 1 || d < 1 {
        return Err(Error::Domain("require t >= 1 and d >= 1".into()));
    }
    let mut sigma2 = 0.0;
    for s in 1..t {
        sigma2 += (expectation.at(s) + lambda) / s as f64;
    }
    sigma2 *= 10.0 * (d * d) as f64;
    let f_t = expectation.at(t);
    Ok((-lambda * lambda / (2.0 * sigma2 + 8.0 * lambda / 3.0)).exp()
        + (-lambda * lambda / (2.0 * f_t + 4.0 * lambda / 3.0)).exp())
}

/// Diagnostic band `A sqrt(40 d^2 / F(t)) + err_term(t, alpha)` for the
/// expected-vs-limit comparison. The error-term summand carries an unknown
/// multiplicative constant (taken as 1), so this is a reported scale, not a
/// certified bound; the stochastic summand decreases in `t` while the error
/// summand can grow, and for slowly decaying `f` the total grows with `t`.
pub fn ratio_deviation_band(
    expectation: &VertexExpectation,
    t: u64,
    d: u64,
    a: f64,
    alpha: f64,
) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("A must be positive, got {a}")));
    }
    let spec = expectation.spec();
    let err = crate::karamata::err_term(spec, t as f64, alpha)?;
    Ok(a * (40.0 * (d * d) as f64 / expectation.at(t)).sqrt() + err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ln_gamma_reference_values() {
        // Frozen from a 30-digit evaluation.
        assert!(ln_gamma(1.0).abs() <= 1e-13);
        assert!(ln_gamma(2.0).abs() <= 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() <= 1e-13);
        assert!((ln_gamma(0.5) - 0.57236494292470009).abs() <= 1e-14);
        assert!((ln_gamma(10.3) - 13.482036786138357).abs() / 13.482036786138357 <= 1e-14);
    }

    #[test]
    fn ln_gamma_satisfies_functional_equation() {
        for x in [0.7, 1.3, 2.9, 7.7, 15.2, 88.8] {
            let lhs = ln_gamma(x + 1.0);
            let rhs = ln_gamma(x) + x.ln();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "x={x}");
        }
    }

    #[test]
    fn ln_gamma_ratio_agrees_with_direct_difference_at_crossover() {
        // The Stirling branch takes over at x = 16; both branches must agree
        // in the region where the direct difference is still accurate.
        for x in [16.0, 17.5, 30.0, 100.0] {
            for a in [0.3, 1.0, 1.5, 2.0] {
                let stable = ln_gamma_ratio(x, a);
                let direct = ln_gamma(x + a) - ln_gamma(x);
                assert!(
                    (stable - direct).abs() <= 1e-11 * stable.max(1.0),
                    "x={x} a={a}: {stable} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn limit_distribution_spot_values() {
        assert!((p_gamma(0.0, 1).unwrap() - 0.5).abs() <= 1e-14);
        assert!((p_gamma(0.5, 1).unwrap() - 1.0 / 3.0).abs() <= 1e-14);
        assert!((p_gamma(0.0, 4).unwrap() - 0.05).abs() <= 1e-14);
        assert!((p_gamma_recursive(0.5, 2).unwrap() - 2.0 / 15.0).abs() <= 1e-15);
        // Frozen 30-digit oracle values.
        let p = p_gamma(0.5, 10_000).unwrap();
        assert!((p - 4.4309684683693732e-7).abs() / 4.4309684683693732e-7 <= 1e-12);
        let p = p_gamma(0.25, 17).unwrap();
        assert!((p - 0.0046639543133168641).abs() / 0.0046639543133168641 <= 1e-12);
    }

    #[test]
    fn limit_distribution_rejects_bad_gamma() {
        assert!(matches!(p_gamma(1.0, 1), Err(Error::Domain(_))));
        assert!(matches!(p_gamma(-0.1, 1), Err(Error::Domain(_))));
        assert!(matches!(p_gamma_recursive(1.5, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_form_matches_recursion_across_gammas() {
        for tenths in 0..=9 {
            let dist = LimitDistribution::new(tenths as f64 / 10.0).unwrap();
            let mut recursive = (1.0 - dist.gamma()) / (2.0 - dist.gamma());
            for d in 1..=10_000u64 {
                if d > 1 {
                    recursive *= (d - 1) as f64 / ((d + 1) as f64 - dist.gamma());
                }
                let closed = dist.p(d);
                assert!(
                    (closed - recursive).abs() / recursive <= 1e-10,
                    "gamma={} d={d}: {closed} vs {recursive}",
                    dist.gamma()
                );
            }
        }
    }

    #[test]
    fn zero_gamma_is_the_telescoping_distribution() {
        let dist = LimitDistribution::new(0.0).unwrap();
        for d in (1..=100).chain([10_000]) {
            let want = 1.0 / (d as f64 * (d + 1) as f64);
            assert!((dist.p(d) - want).abs() / want <= 1e-10, "d={d}");
        }
        // Partial sums telescope: sum_{d<=D} = 1 - 1/(D+1).
        assert!((dist.mass_through(999) - (1.0 - 1.0 / 1000.0)).abs() <= 1e-12);
    }

    #[test]
    fn values_positive_and_strictly_decreasing() {
        for gamma in [0.0, 0.3, 0.5, 0.75, 0.9] {
            let dist = LimitDistribution::new(gamma).unwrap();
            let mut prev = f64::INFINITY;
            for d in 1..=200 {
                let p = dist.p(d);
                assert!(p > 0.0 && p < prev, "gamma={gamma} d={d}");
                prev = p;
            }
        }
    }

    #[test]
    fn tail_behaves_like_power_law_with_expected_constant() {
        // p(d) d^(2-gamma) -> (1-gamma) Gamma(2-gamma); frozen constants.
        let cases = [(0.0, 1.0), (0.5, 0.44311346272637901), (0.9, 0.095135076986687318)];
        for (gamma, constant) in cases {
            let dist = LimitDistribution::new(gamma).unwrap();
            assert!((dist.tail_constant() - constant).abs() / constant <= 1e-12);
            let d = 10_000u64;
            let scaled = dist.p(d) * (d as f64).powf(2.0 - gamma);
            assert!(
                (scaled / constant - 1.0).abs() <= 0.01,
                "gamma={gamma}: {scaled} vs {constant}"
            );
        }
    }

    #[test]
    fn mass_accounting_is_exact_and_totals_one() {
        // The closed-form partial mass must match brute-force summation, stay
        // strictly below 1 at any finite cutoff, and approach 1 as the cutoff
        // grows, for every gamma in [0, 1).
        for gamma in [0.0, 0.5, 0.9] {
            let dist = LimitDistribution::new(gamma).unwrap();
            let brute: f64 = (1..=1000).map(|d| dist.p_recursive(d)).sum();
            let closed = dist.mass_through(1000);
            assert!(
                (brute - closed).abs() <= 1e-10,
                "gamma={gamma}: {brute} vs {closed}"
            );
            assert!(closed < 1.0);
            assert!(dist.mass_through(1_000_000) > closed);
            // The escaped mass follows its tail law Gamma(2-gamma) D^-(1-gamma)
            // (slow for gamma near 1, which is the point of the heavy tail).
            let d_cut = 100_000_000u64;
            let esc = dist.escaped_mass_beyond(d_cut);
            let law = ln_gamma(2.0 - gamma).exp() * ((d_cut + 1) as f64).powf(gamma - 1.0);
            assert!((esc / law - 1.0).abs() <= 1e-5, "gamma={gamma}: {esc} vs {law}");
        }
        // Frozen oracle for the escaped mass at gamma = 0.5, cutoff 1e4.
        let dist = LimitDistribution::new(0.5).unwrap();
        let esc = dist.escaped_mass_beyond(10_000);
        assert!((esc - 0.0088619369367387463).abs() / 0.0088619369367387463 <= 1e-10);
    }

    #[test]
    fn mean_diverges_for_positive_gamma() {
        // Partial first moments grow like d_cut^gamma: the degree mass
        // escapes to infinity even though the probability mass does not.
        let partial_mean = |cut: u64| -> f64 {
            let mut p = (1.0 - 0.5) / (2.0 - 0.5);
            let mut sum = p;
            for d in 2..=cut {
                p *= (d - 1) as f64 / ((d + 1) as f64 - 0.5);
                sum += d as f64 * p;
            }
            sum
        };
        let small = partial_mean(100);
        let large = partial_mean(10_000);
        assert!(large > 5.0 * small, "{large} vs {small}");
    }

    fn constant_half() -> EdgeStepSpec {
        EdgeStepSpec::Constant { p: 0.5 }
    }

    #[test]
    fn evolution_starts_from_a_single_loop() {
        let table = evolve_expectations(constant_half(), &[1], 8).unwrap();
        assert_eq!(table.expected_count(1, 2).unwrap(), 1.0);
        for d in [1u64, 3, 4, 5, 6, 7, 8] {
            assert_eq!(table.expected_count(1, d).unwrap(), 0.0);
        }
        assert_eq!(table.f_at(1).unwrap(), 1.0);
        assert_eq!(table.ratio(1, 2).unwrap(), 1.0);
    }

    #[test]
    fn one_step_matches_hand_enumeration() {
        // With f(2) = 1/2: a vertex-step yields degrees {3, 1} (the endpoint
        // must be the loop vertex), an edge-step yields a second loop on the
        // only vertex, degree 4. So E N_2 = {1: 1/2, 3: 1/2, 4: 1/2}.
        let table = evolve_expectations(constant_half(), &[2], 8).unwrap();
        assert_eq!(table.expected_count(2, 1).unwrap(), 0.5);
        assert_eq!(table.expected_count(2, 2).unwrap(), 0.0);
        assert_eq!(table.expected_count(2, 3).unwrap(), 0.5);
        assert_eq!(table.expected_count(2, 4).unwrap(), 0.5);
        assert_eq!(table.f_at(2).unwrap(), 1.5);
    }

    #[test]
    fn two_steps_match_exhaustive_enumeration() {
        // Full enumeration of both steps for f = 1/2 gives degree multisets
        // {4,1,1}: 12/64, {3,2,1}: 4/64, {5,1}: 25/64, {4,2}: 6/64,
        // {3,3}: 1/64, {6}: 16/64, hence these exact expected counts.
        let table = evolve_expectations(constant_half(), &[3], 8).unwrap();
        let want = [53.0, 10.0, 6.0, 18.0, 25.0, 16.0];
        for (i, &w) in want.iter().enumerate() {
            let got = table.expected_count(3, i as u64 + 1).unwrap();
            assert!(
                (got - w / 64.0).abs() <= 1e-15,
                "d={}: {got} vs {}",
                i + 1,
                w / 64.0
            );
        }
        assert_eq!(table.f_at(3).unwrap(), 2.0);
    }

    #[test]
    fn evolution_conserves_mass_and_degree() {
        let specs = [
            EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.0 },
            EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.25 },
            EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.5 },
            EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.75 },
            EdgeStepSpec::PowerLaw { c: 1.0, gamma: 1.0 },
            constant_half(),
        ];
        for spec in specs {
            let checkpoints = [10u64, 100, 1000];
            let table = evolve_expectations(spec, &checkpoints, 2000).unwrap();
            let reference = VertexExpectation::new(spec);
            for &t in &checkpoints {
                let mut mass = 0.0;
                let mut degree = 0.0;
                for d in 1..=2 * t {
                    let v = table.expected_count(t, d).unwrap();
                    assert!(v >= 0.0, "{spec} t={t} d={d}: negative {v}");
                    mass += v;
                    degree += d as f64 * v;
                }
                let f = reference.at(t);
                assert!((mass - f).abs() / f <= 1e-9, "{spec} t={t}: mass {mass} vs {f}");
                let edges = 2.0 * t as f64;
                assert!(
                    (degree - edges).abs() / edges <= 1e-9,
                    "{spec} t={t}: degree {degree} vs {edges}"
                );
                // Untruncated support: only rounding residue may remain.
                assert!(table.truncated_mass_at(t).unwrap() <= 1e-9 * f);
            }
            assert!(!table.truncation_warning());
        }
    }

    #[test]
    fn truncation_keeps_low_degrees_exact_and_accounts_for_loss() {
        let spec = EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.5 };
        let full = evolve_expectations(spec, &[500], 1000).unwrap();
        let cut = evolve_expectations(spec, &[500], 16).unwrap();
        for d in 1..=16u64 {
            let a = full.expected_count(500, d).unwrap();
            let b = cut.expected_count(500, d).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.max(1.0), "d={d}: {a} vs {b}");
        }
        let lost_full: f64 = (17..=1000u64)
            .map(|d| full.expected_count(500, d).unwrap())
            .sum();
        let lost_cut = cut.truncated_mass_at(500).unwrap();
        assert!((lost_full - lost_cut).abs() <= 1e-9);
        assert!(cut.truncation_warning());
        assert!(!full.truncation_warning());
    }

    #[test]
    fn ratios_approach_the_limit_distribution() {
        let spec = EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.5 };
        let table = evolve_expectations(spec, &[1000, 100_000], 64).unwrap();
        let p1 = LimitDistribution::new(0.5).unwrap().p(1);
        let early = (table.ratio(1000, 1).unwrap() - p1).abs();
        let late = (table.ratio(100_000, 1).unwrap() - p1).abs();
        assert!(late < early, "late {late} vs early {early}");
    }

    #[test]
    fn evolution_rejects_bad_arguments() {
        assert!(matches!(
            evolve_expectations(constant_half(), &[5], 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            evolve_expectations(constant_half(), &[0, 5], 8),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            evolve_expectations(constant_half(), &[5, 5], 8),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            evolve_expectations(constant_half(), &[5, 3], 8),
            Err(Error::Domain(_))
        ));
        let table = evolve_expectations(constant_half(), &[5], 8).unwrap();
        assert!(matches!(
            table.expected_count(4, 1),
            Err(Error::MissingCheckpoint(4))
        ));
        assert!(matches!(table.expected_count(5, 0), Err(Error::Domain(_))));
        assert!(matches!(table.expected_count(5, 9), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_round_trips_exactly() {
        let spec = EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.25 };
        let table = evolve_expectations(spec, &[1, 10, 100], 12).unwrap();
        let text = table.to_csv_string();
        let back = ExpectationTable::read_csv(&text, spec).unwrap();
        assert_eq!(table, back);
        assert!(text.lines().any(|l| l == "1,2,1.0,1.0,1.0"));
    }

    #[test]
    fn csv_read_rejects_corruption_and_mismatch() {
        let spec = constant_half();
        let table = evolve_expectations(spec, &[1, 10], 6).unwrap();
        let text = table.to_csv_string();

        let other = EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.5 };
        assert!(matches!(
            ExpectationTable::read_csv(&text, other),
            Err(Error::Domain(_))
        ));

        let corrupt = text.replace("t,d,expected_count,F_t,ratio", "t;d;x");
        assert!(matches!(
            ExpectationTable::read_csv(&corrupt, spec),
            Err(Error::Parse(_))
        ));
        let corrupt = text.replace("10,1,", "10,oops,");
        assert!(matches!(
            ExpectationTable::read_csv(&corrupt, spec),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            ExpectationTable::read_csv("", spec),
            Err(Error::Parse(_))
        ));

        // Without the spec comment, F values must identify the function.
        let stripped: String = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(ExpectationTable::read_csv(&stripped, spec).is_ok());
        assert!(matches!(
            ExpectationTable::read_csv(&stripped, other),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn halfwidth_matches_frozen_substitution() {
        // Constant p=1 makes F(t) = t, so t = 1000 realizes F = 1000; with
        // d=2, A=1, gamma=0 the halfwidth is 20/sqrt(1000).
        let expectation = VertexExpectation::new(EdgeStepSpec::Constant { p: 1.0 });
        let (halfwidth, ok, prob) = concentration_halfwidth(&expectation, 1000, 2, 1.0).unwrap();
        assert!((halfwidth - 0.63245553203367587).abs() <= 1e-15);
        // A exceeds sqrt(1000)/(8 ln 1000) ~ 0.57, so the proved regime is off.
        assert!(!ok);
        assert!((prob - 2.1495939317213678).abs() <= 1e-14);
        let (_, ok, _) = concentration_halfwidth(&expectation, 1000, 2, 0.1).unwrap();
        assert!(ok);
    }

    #[test]
    fn halfwidth_limits_and_domain() {
        let expectation = VertexExpectation::new(EdgeStepSpec::Constant { p: 1.0 });
        let (hw, _, prob) = concentration_halfwidth(&expectation, 1000, 1, 1e-10).unwrap();
        assert!(hw <= 1e-10);
        assert!((prob - 3.0).abs() <= 1e-12);
        let (_, ok, _) = concentration_halfwidth(&expectation, 1000, 1, 1e6).unwrap();
        assert!(!ok);

        let critical = VertexExpectation::new(EdgeStepSpec::PowerLaw { c: 1.0, gamma: 1.0 });
        assert!(matches!(
            concentration_halfwidth(&critical, 1000, 1, 1.0),
            Err(Error::UnsupportedRegime(_))
        ));
        assert!(concentration_halfwidth(&expectation, 1, 1, 1.0).is_err());
        assert!(concentration_halfwidth(&expectation, 1000, 1, 0.0).is_err());
    }

    #[test]
    fn general_bound_matches_frozen_arithmetic() {
        // sigma^2 = 10 sum_{s<100} (s + 50)/s = 990 + 500 H_99; frozen.
        let expectation = VertexExpectation::new(EdgeStepSpec::Constant { p: 1.0 });
        let bound = general_concentration_bound(&expectation, 100, 1, 50.0).unwrap();
        assert!((bound - 0.70979251274356709).abs() <= 1e-12);
        assert!(bound > 0.0 && bound < 2.0);
    }

    #[test]
    fn general_bound_decreases_in_lambda() {
        let expectation = VertexExpectation::new(constant_half());
        let mut prev = f64::INFINITY;
        for lambda in [1.0, 5.0, 25.0, 125.0, 625.0] {
            let b = general_concentration_bound(&expectation, 500, 2, lambda).unwrap();
            assert!(b <= prev, "lambda={lambda}");
            prev = b;
        }
        // sigma^2 grows linearly in lambda, so decay is only exponential in
        // lambda (not lambda^2); it takes a large deviation to get tiny.
        let far = general_concentration_bound(&expectation, 500, 2, 1e5).unwrap();
        assert!(far <= 1e-10);
        assert!(general_concentration_bound(&expectation, 500, 2, 0.0).is_err());
    }

    #[test]
    fn ratio_deviation_band_first_summand_substitution() {
        // F(4000) = 4000 for Constant p=1: the stochastic summand at d=1,
        // A=1 is sqrt(40/4000) = 0.1 exactly; err_term rides on top.
        let expectation = VertexExpectation::new(EdgeStepSpec::Constant { p: 1.0 });
        let spec = expectation.spec();
        let err = crate::karamata::err_term(spec, 4000.0, 0.5).unwrap();
        let band = ratio_deviation_band(&expectation, 4000, 1, 1.0, 0.5).unwrap();
        assert!((band - err - 0.1).abs() <= 1e-12);
        let band2 = ratio_deviation_band(&expectation, 4000, 2, 1.0, 0.5).unwrap();
        assert!(((band2 - err) / (band - err) - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn ratio_deviation_band_summand_monotonicity() {
        // The stochastic summand shrinks with t; the deterministic error
        // scale grows for gamma = 0.5, so the reported total grows too.
        let expectation = VertexExpectation::new(EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.5 });
        let spec = expectation.spec();
        let mut prev_stochastic = f64::INFINITY;
        let mut prev_total = 0.0;
        for k in [4u32, 5, 6] {
            let t = 10u64.pow(k);
            let total = ratio_deviation_band(&expectation, t, 1, 1.0, 0.5).unwrap();
            let stochastic = total - crate::karamata::err_term(spec, t as f64, 0.5).unwrap();
            assert!(stochastic < prev_stochastic);
            assert!(total > prev_total);
            prev_stochastic = stochastic;
            prev_total = total;
        }
        let critical = VertexExpectation::new(EdgeStepSpec::PowerLaw { c: 1.0, gamma: 1.0 });
        assert!(matches!(
            ratio_deviation_band(&critical, 100, 1, 1.0, 0.5),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    proptest! {
        #[test]
        fn prop_closed_form_matches_recursion(gamma in 0.0f64..0.99, d in 1u64..500) {
            let dist = LimitDistribution::new(gamma).unwrap();
            let a = dist.p(d);
            let b = dist.p_recursive(d);
            prop_assert!((a - b).abs() / b <= 1e-11);
        }

        #[test]
        fn prop_evolution_nonnegative_and_conservative(gamma in 0.0f64..1.0, t in 2u64..200) {
            let spec = EdgeStepSpec::PowerLaw { c: 1.0, gamma };
            let table = evolve_expectations(spec, &[t], 2 * t as usize).unwrap();
            let mut mass = 0.0;
            for d in 1..=2 * t {
                let v = table.expected_count(t, d).unwrap();
                prop_assert!(v >= 0.0);
                mass += v;
            }
            let f = table.f_at(t).unwrap();
            prop_assert!((mass - f).abs() / f <= 1e-9);
        }
    }
}
