//! The graph process itself: a growing multigraph where step `t+1` either
//! brings a new vertex attached preferentially (probability `f(t+1)`) or
//! inserts an edge between two preferentially chosen existing vertices.
//! Loops and parallel edges are allowed; the initial graph is one vertex
//! carrying one loop.
//!
//! Preferential sampling is exact and O(1): every edge endpoint is appended
//! to a flat list (a loop appends its vertex twice), so a uniform index into
//! that list is a degree-proportional vertex draw. No weights are ever
//! updated because each step adds exactly one edge.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::edge_step::EdgeStepSpec;
use crate::{Error, Result};

/// Storage width for vertex ids. `u32` halves the endpoint-list footprint
/// and suffices while the vertex count fits; [`GraphState::run_to`] refuses
/// targets the width cannot address.
pub trait VertexId: Copy + Eq + Ord + std::fmt::Debug + Send + Sync + 'static {
    const MAX_INDEX: u64;
    fn from_index(index: u64) -> Self;
    fn index(self) -> u64;
}

impl VertexId for u32 {
    const MAX_INDEX: u64 = u32::MAX as u64;
    #[inline]
    fn from_index(index: u64) -> Self {
        debug_assert!(index <= Self::MAX_INDEX);
        index as u32
    }
    #[inline]
    fn index(self) -> u64 {
        self as u64
    }
}

impl VertexId for u64 {
    const MAX_INDEX: u64 = u64::MAX;
    #[inline]
    fn from_index(index: u64) -> Self {
        index
    }
    #[inline]
    fn index(self) -> u64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepType {
    Vertex,
    Edge,
}

/// What one step did: the appended edge and, for vertex-steps, the id of the
/// vertex that was born (always the second endpoint).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome<I: VertexId> {
    pub step_type: StepType,
    pub endpoints: (I, I),
    pub new_vertex: Option<I>,
}

/// The evolving graph. Only degree information is retained (plus birth
/// times); adjacency is never needed. Ids are 0-based in creation order, so
/// the initial vertex is id 0.
#[derive(Clone)]
pub struct GraphState<I: VertexId> {
    spec: EdgeStepSpec,
    delta: f64,
    rng: ChaCha8Rng,
    endpoints: Vec<I>,
    degrees: Vec<u64>,
    birth_times: Vec<u64>,
    t: u64,
}

/// Builds the time-1 graph: one vertex with one loop (degree 2). The PRNG is
/// a fixed, seedable algorithm (ChaCha with 8 rounds) so seeds stay portable.
/// `delta >= 0` is the affine attachment offset; `delta = 0` is the pure
/// degree-proportional rule. Negative offsets would require rejection
/// sampling instead of the uniform/preferential mixture and are rejected.
pub fn new_initial<I: VertexId>(spec: EdgeStepSpec, delta: f64, seed: u64) -> Result<GraphState<I>> {
    spec.validate()?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::UnsupportedRegime(format!(
            "affine offset must be finite and >= 0, got {delta}"
        )));
    }
    let zero = I::from_index(0);
    Ok(GraphState {
        spec,
        delta,
        rng: ChaCha8Rng::seed_from_u64(seed),
        endpoints: vec![zero, zero],
        degrees: vec![2],
        birth_times: vec![1],
        t: 1,
    })
}

impl<I: VertexId> GraphState<I> {
    pub fn spec(&self) -> EdgeStepSpec {
        self.spec
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Current time = number of edges.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn vertex_count(&self) -> u64 {
        self.degrees.len() as u64
    }

    /// Degrees indexed by vertex id.
    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    /// The step at which each vertex was created (1 for the initial vertex).
    pub fn birth_times(&self) -> &[u64] {
        &self.birth_times
    }

    /// The endpoint list; its length is exactly `2 t`.
    pub fn endpoints(&self) -> &[I] {
        &self.endpoints
    }

    /// Heap footprint from capacity accounting (the structure never holds
    /// other allocations).
    pub fn memory_bytes(&self) -> usize {
        std::mem::size_of::<Self>()
            + self.endpoints.capacity() * std::mem::size_of::<I>()
            + self.degrees.capacity() * std::mem::size_of::<u64>()
            + self.birth_times.capacity() * std::mem::size_of::<u64>()
    }

    /// One degree-proportional draw (plus the affine `delta` offset when
    /// configured): probability of returning `v` is
    /// `(degree(v) + delta) / (2t + delta V_t)`.
    ///
    /// `delta = 0` is a single uniform index into the endpoint list. For
    /// `delta > 0` the law decomposes exactly into that draw with probability
    /// `2t / (2t + delta V_t)` and a uniform vertex otherwise.
    pub fn sample_preferential(&mut self) -> I {
        if self.delta > 0.0 {
            let edge_mass = (2 * self.t) as f64;
            let total = edge_mass + self.delta * self.degrees.len() as f64;
            if self.rng.random::<f64>() * total >= edge_mass {
                let v = self.rng.random_range(0..self.degrees.len());
                return I::from_index(v as u64);
            }
        }
        self.endpoints[self.rng.random_range(0..self.endpoints.len())]
    }

    /// Forces a vertex-step: a new vertex attaches to one preferential
    /// endpoint. [`GraphState::advance`] is the coin-flipping entry point.
    pub fn step_vertex(&mut self) -> StepOutcome<I> {
        let u = self.sample_preferential();
        let v = I::from_index(self.degrees.len() as u64);
        self.degrees[u.index() as usize] += 1;
        self.degrees.push(1);
        self.birth_times.push(self.t + 1);
        self.endpoints.push(u);
        self.endpoints.push(v);
        self.t += 1;
        StepOutcome {
            step_type: StepType::Vertex,
            endpoints: (u, v),
            new_vertex: Some(v),
        }
    }

    /// Forces an edge-step: two independent preferential draws (both against
    /// the pre-step graph), possibly equal; a loop then adds 2 to one degree.
    pub fn step_edge(&mut self) -> StepOutcome<I> {
        let u1 = self.sample_preferential();
        let u2 = self.sample_preferential();
        self.degrees[u1.index() as usize] += 1;
        self.degrees[u2.index() as usize] += 1;
        self.endpoints.push(u1);
        self.endpoints.push(u2);
        self.t += 1;
        StepOutcome {
            step_type: StepType::Edge,
            endpoints: (u1, u2),
            new_vertex: None,
        }
    }

    /// Performs step `t -> t+1`: draws the step-type coin with success
    /// probability `f(t+1)`, then the endpoint draw(s). The draw order
    /// (coin, then endpoints left to right) is part of the determinism
    /// contract.
    pub fn advance(&mut self) -> StepOutcome<I> {
        let f = self.spec.evaluate(self.t + 1);
        if self.rng.random::<f64>() < f {
            self.step_vertex()
        } else {
            self.step_edge()
        }
    }

    fn check_target(&self, t_target: u64) -> Result<()> {
        if t_target < self.t {
            return Err(Error::Domain(format!(
                "t_target {t_target} is behind current time {}",
                self.t
            )));
        }
        // Every step can create at most one vertex, so ids stay addressable
        // iff the width covers t_target.
        if t_target > I::MAX_INDEX {
            return Err(Error::UnsupportedRegime(format!(
                "vertex id width cannot address t_target = {t_target}; use 64-bit ids"
            )));
        }
        Ok(())
    }

    /// Advances until `t = t_target`, reserving the endpoint list up front.
    pub fn run_to(&mut self, t_target: u64) -> Result<()> {
        self.check_target(t_target)?;
        self.endpoints
            .reserve_exact((2 * t_target) as usize - self.endpoints.len());
        while self.t < t_target {
            self.advance();
        }
        Ok(())
    }

    /// Advances to the last checkpoint, calling `observe` exactly when `t`
    /// equals each checkpoint (a checkpoint equal to the current time fires
    /// immediately). Checkpoints must be strictly ascending and start at or
    /// after the current time.
    pub fn run_with_checkpoints(
        &mut self,
        checkpoints: &[u64],
        mut observe: impl FnMut(&Self),
    ) -> Result<()> {
        for pair in checkpoints.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Domain(format!(
                    "checkpoints must be strictly ascending, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if let Some(&last) = checkpoints.last() {
            self.check_target(*checkpoints.first().unwrap())?;
            self.check_target(last)?;
            self.endpoints
                .reserve_exact((2 * last) as usize - self.endpoints.len());
        }
        for &ck in checkpoints {
            while self.t < ck {
                self.advance();
            }
            observe(self);
        }
        Ok(())
    }

    /// CSV rows `step,endpoint_a,endpoint_b,step_type` for each step so far.
    /// Step 1 is the fixed initial loop; later steps are classified by
    /// whether their second endpoint was born at that step.
    pub fn write_edge_list_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,endpoint_a,endpoint_b,step_type")?;
        for s in 1..=self.t {
            let a = self.endpoints[(2 * s - 2) as usize];
            let b = self.endpoints[(2 * s - 1) as usize];
            let kind = if s == 1 {
                "initial"
            } else if self.birth_times[b.index() as usize] == s {
                "vertex"
            } else {
                "edge"
            };
            writeln!(w, "{},{},{},{}", s, a.index(), b.index(), kind)?;
        }
        Ok(())
    }
}

/// Per-replica seed derivation: a fixed 64-bit mix (golden-ratio increment
/// followed by an xor-shift-multiply finalizer) of `base_seed` and the
/// replica index. Closed-form, so replica `i` can be re-run in isolation.
pub fn derive_replica_seed(base_seed: u64, replica_index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(replica_index.wrapping_add(1).wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
