//! Runs a fusion plan: leaves solve their slice with the separator layers
//! treated as virtual, then each fuse job joins its children's state in place,
//! releases matches into its separator, loads the separator's defects and
//! resumes the solve loop.
//!
//! Jobs run on a pool of std threads pulling from one FIFO ready queue. Wall
//! clock times go to the event log; the reported decode time and latency come
//! from replaying the recorded per-job work on a virtual clock, so they do not
//! depend on the host.

use std::collections::{BinaryHeap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dual::{DualModule, Region};
use crate::error::{PlanError, SolverError};
use crate::framework::{feasibility_violations, finish_result, run_loop, DecodeResult, Instrumentation, PrimalModule};
use crate::fusion::plan::{FusionPlan, JobKind};
use crate::graph::{ModelGraph, Syndrome, VertexIndex};
use crate::partition::{Partition, RegionId, Segment};
use crate::paths::ShortestPaths;
use crate::primal::standard::PrimalNode;
use crate::primal::StandardPrimal;

/// Work units (edge scans and vertex claims) per virtual time unit.
pub const WORK_PER_TIME_UNIT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Every layer is available at time 0.
    Batch,
    /// Layer `i` arrives at `(i + 1) · cycle_time`.
    Stream,
}

/// One line of the event log. Times are wall-clock nanoseconds since the
/// start of the decode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobEvent {
    pub job: usize,
    pub start: u64,
    pub end: u64,
    pub worker: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TimingReport {
    /// Virtual time from the first leaf becoming ready to the root finishing.
    pub decode_time: f64,
    /// Virtual time from the last layer's arrival to the root finishing.
    pub latency: f64,
    pub rounds: u32,
    /// Virtual duration of each fuse job, in job order.
    pub fusion_times: Vec<f64>,
    pub leaf_ready: Vec<f64>,
    pub job_end: Vec<f64>,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JobStats {
    pub work: u64,
    /// Fuse jobs: distinct dual nodes touched while resolving the fuse.
    pub touched: u64,
    /// Fuse jobs: nodes whose match into the separator was broken.
    pub released: usize,
    /// Defects loaded by the job (separator defects for fuse jobs).
    pub defects: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FusionStats {
    pub jobs: Vec<JobStats>,
    /// Instrumented runs: obstacle and cover checks during every solve loop.
    pub instrumentation: Instrumentation,
    /// Instrumented runs: feasibility of the state right after each fuse's
    /// surgery, before the loop resumes.
    pub fuse_violations: Vec<String>,
    pub fuses_checked: usize,
}

#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub result: DecodeResult,
    pub timing: TimingReport,
    pub events: Vec<JobEvent>,
    pub stats: FusionStats,
}

impl FusionOutcome {
    pub fn events_json_lines(&self) -> String {
        self.events.iter().map(|e| serde_json::to_string(e).expect("event serializes") + "\n").collect()
    }

    /// Mean touched-node count over fuse jobs.
    pub fn mean_touched_per_fuse(&self, plan: &FusionPlan) -> Option<f64> {
        let fuses: Vec<u64> = plan
            .tree
            .iter()
            .zip(&self.stats.jobs)
            .filter(|(j, _)| matches!(j.kind, JobKind::Fuse { .. }))
            .map(|(_, s)| s.touched)
            .collect();
        (!fuses.is_empty()).then(|| fuses.iter().sum::<u64>() as f64 / fuses.len() as f64)
    }
}

struct JobOutput {
    dual: DualModule,
    primal: StandardPrimal,
    stats: JobStats,
    instrumentation: Instrumentation,
    fuse_violations: Option<Vec<String>>,
}

struct Context<'a> {
    graph: &'a Arc<ModelGraph>,
    partition: &'a Arc<Partition>,
    plan: &'a FusionPlan,
    defects: &'a [Vec<VertexIndex>],
    instrument: bool,
}

type Storage = (Region, Segment<PrimalNode>);

fn load(dual: &mut DualModule, primal: &mut StandardPrimal, defects: &[VertexIndex]) -> Result<(), SolverError> {
    for &v in defects {
        let id = dual.add_defect(v)?;
        primal.add_defect_node(dual, id)?;
    }
    Ok(())
}

fn run_job(
    ctx: &Context<'_>,
    id: usize,
    storage: Storage,
    children: Option<(JobOutput, JobOutput)>,
) -> Result<JobOutput, SolverError> {
    let (mut region, segment) = storage;
    region.reset();
    let defects = &ctx.defects[id];
    let mut instrumentation = Instrumentation::default();
    let mut paths = ctx.instrument.then(|| ShortestPaths::new(ctx.graph.vertex_count()));
    let children_fused = children.is_some();
    let (mut dual, mut primal, released, before, fuse_violations) = match (ctx.plan.tree[id].kind, children) {
        (JobKind::Leaf { .. }, None) => {
            let mut dual = DualModule::from_region(Arc::clone(ctx.graph), Arc::clone(ctx.partition), region);
            let mut primal = StandardPrimal::from_segment(id as RegionId, segment);
            load(&mut dual, &mut primal, defects)?;
            (dual, primal, 0, 0, None)
        }
        (JobKind::Fuse { .. }, Some((left, right))) => {
            instrumentation = left.instrumentation;
            merge(&mut instrumentation, right.instrumentation);
            let mut dual = DualModule::fuse(left.dual, right.dual, region)?;
            let mut primal = StandardPrimal::fuse(left.primal, right.primal, segment);
            dual.begin_touch_window();
            let before = dual.work();
            let released = primal.release_boundary(&mut dual, id as RegionId)?;
            load(&mut dual, &mut primal, defects)?;
            let violations = paths.as_mut().map(|p| feasibility_violations(&dual, p));
            (dual, primal, released, before, violations)
        }
        _ => return Err(SolverError::Contract(format!("job {id} started with the wrong inputs"))),
    };
    run_loop(&mut dual, &mut primal, paths.as_mut().map(|p| (&mut instrumentation, p)))?;
    let stats = JobStats {
        work: dual.work() - before,
        touched: if children_fused { dual.touched_nodes() } else { 0 },
        released,
        defects: defects.len(),
    };
    Ok(JobOutput { dual, primal, stats, instrumentation, fuse_violations })
}

fn merge(into: &mut Instrumentation, from: Instrumentation) {
    into.conflicts_checked += from.conflicts_checked;
    into.tight_violations.extend(from.tight_violations);
    into.coverage_violations.extend(from.coverage_violations);
}

struct Board {
    queue: VecDeque<usize>,
    waiting: Vec<u8>,
    storage: Vec<Option<Storage>>,
    outputs: Vec<Option<JobOutput>>,
    stats: Vec<JobStats>,
    events: Vec<JobEvent>,
    fuse_violations: Vec<String>,
    fuses_checked: usize,
    error: Option<SolverError>,
    done: bool,
}

fn worker(ctx: &Context<'_>, board: &Mutex<Board>, wake: &Condvar, worker_id: usize, epoch: Instant) {
    loop {
        let (id, storage, children) = {
            let mut b = board.lock().expect("board lock");
            let id = loop {
                if b.done || b.error.is_some() {
                    return;
                }
                if let Some(id) = b.queue.pop_front() {
                    break id;
                }
                b = wake.wait(b).expect("board lock");
            };
            let storage = b.storage[id].take().expect("job storage present");
            let children = match ctx.plan.tree[id].kind {
                JobKind::Fuse { left, right, .. } => {
                    Some((b.outputs[left].take().expect("left child done"), b.outputs[right].take().expect("right child done")))
                }
                JobKind::Leaf { .. } => None,
            };
            (id, storage, children)
        };
        let start = epoch.elapsed().as_nanos() as u64;
        let out = run_job(ctx, id, storage, children);
        let end = epoch.elapsed().as_nanos() as u64;
        let mut b = board.lock().expect("board lock");
        match out {
            Ok(mut out) => {
                if let Some(v) = out.fuse_violations.take() {
                    b.fuse_violations.extend(v);
                    b.fuses_checked += 1;
                }
                b.events.push(JobEvent { job: id, start, end, worker: worker_id });
                b.stats[id] = out.stats.clone();
                b.outputs[id] = Some(out);
                match ctx.plan.tree[id].parent {
                    Some(p) => {
                        b.waiting[p] -= 1;
                        if b.waiting[p] == 0 {
                            b.queue.push_back(p);
                        }
                    }
                    None => b.done = true,
                }
            }
            Err(e) => b.error = Some(e),
        }
        wake.notify_all();
    }
}

/// Reusable fusion decoder for one graph and plan. Region storage is kept
/// between shots.
pub struct FusionDecoder {
    graph: Arc<ModelGraph>,
    plan: FusionPlan,
    partition: Arc<Partition>,
    pool: Vec<Option<Storage>>,
    workers: usize,
    schedule: Schedule,
    instrument: bool,
    paths: ShortestPaths,
}

impl FusionDecoder {
    pub fn new(graph: Arc<ModelGraph>, plan: FusionPlan, workers: usize, schedule: Schedule) -> Result<Self, PlanError> {
        if workers == 0 {
            return Err(PlanError::NoWorkers);
        }
        plan.validate()?;
        let partition = Arc::new(plan.partition(&graph)?);
        let pool = (0..plan.tree.len()).map(|id| Some((Region::new(&partition, id as RegionId), Segment::default()))).collect();
        let paths = ShortestPaths::new(graph.vertex_count());
        Ok(Self { graph, plan, partition, pool, workers, schedule, instrument: false, paths })
    }

    pub fn plan(&self) -> &FusionPlan {
        &self.plan
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn graph(&self) -> &Arc<ModelGraph> {
        &self.graph
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Checks tight edges and covers in every loop and full dual
    /// feasibility right after every fuse.
    pub fn set_instrument(&mut self, on: bool) {
        self.instrument = on;
    }

    pub fn decode(&mut self, syndrome: &Syndrome) -> Result<FusionOutcome, PlanError> {
        let checked = self.graph.check_syndrome(&syndrome.defects).map_err(SolverError::from)?;
        let jobs = self.plan.tree.len();
        let mut defects = vec![Vec::new(); jobs];
        for &v in &checked.defects {
            defects[self.partition.region_of(v) as usize].push(v);
        }
        let storage: Vec<Option<Storage>> = (0..jobs)
            .map(|id| {
                self.pool[id].take().or_else(|| Some((Region::new(&self.partition, id as RegionId), Segment::default())))
            })
            .collect();
        let mut waiting = vec![0u8; jobs];
        let mut queue = VecDeque::new();
        for (id, job) in self.plan.tree.iter().enumerate() {
            match job.kind {
                JobKind::Fuse { .. } => waiting[id] = 2,
                JobKind::Leaf { .. } => queue.push_back(id),
            }
        }
        let board = Mutex::new(Board {
            queue,
            waiting,
            storage,
            outputs: (0..jobs).map(|_| None).collect(),
            stats: vec![JobStats::default(); jobs],
            events: Vec::with_capacity(jobs),
            fuse_violations: Vec::new(),
            fuses_checked: 0,
            error: None,
            done: false,
        });
        let wake = Condvar::new();
        let ctx = Context {
            graph: &self.graph,
            partition: &self.partition,
            plan: &self.plan,
            defects: &defects,
            instrument: self.instrument,
        };
        let epoch = Instant::now();
        if self.workers == 1 {
            worker(&ctx, &board, &wake, 0, epoch);
        } else {
            std::thread::scope(|s| {
                for w in 0..self.workers {
                    let (ctx, board, wake) = (&ctx, &board, &wake);
                    s.spawn(move || worker(ctx, board, wake, w, epoch));
                }
            });
        }
        let wall_ns = epoch.elapsed().as_nanos() as u64;
        let mut b = board.into_inner().expect("board lock");
        if let Some(e) = b.error {
            return Err(e.into());
        }
        let root = self.plan.root();
        let mut out = b.outputs[root].take().ok_or_else(|| PlanError::Scheduling("root job did not finish".into()))?;
        let raw = out.primal.extract(&out.dual, &mut self.paths)?;
        let result = finish_result(&self.graph, &raw, out.dual.dual_objective(), &mut self.paths)?;

        // fuse jobs fold their children's counters in, so the root has them all
        let stats = FusionStats {
            jobs: std::mem::take(&mut b.stats),
            instrumentation: std::mem::take(&mut out.instrumentation),
            fuse_violations: std::mem::take(&mut b.fuse_violations),
            fuses_checked: b.fuses_checked,
        };
        let JobOutput { dual, primal, .. } = out;
        let (lo, segments) = primal.into_segments();
        debug_assert_eq!(lo, 0);
        for (id, (region, segment)) in dual.into_regions().into_iter().zip(segments).enumerate() {
            self.pool[id] = Some((region, segment));
        }
        let timing = virtual_timing(&self.plan, &stats.jobs, self.workers, self.schedule, wall_ns);
        let mut events = b.events;
        events.sort_by_key(|e| (e.start, e.job));
        Ok(FusionOutcome { result, timing, events, stats })
    }
}

/// Replays the jobs on `workers` virtual workers: a job becomes ready when its
/// layers have arrived (leaves) or both children finished (fuses); the ready
/// job with the earliest ready time (then lowest id) starts on the earliest
/// free worker.
pub fn virtual_timing(plan: &FusionPlan, jobs: &[JobStats], workers: usize, schedule: Schedule, wall_ns: u64) -> TimingReport {
    let n = plan.tree.len();
    let duration = |id: usize| (jobs[id].work + 1) as f64 / WORK_PER_TIME_UNIT;
    let leaf_ready: Vec<f64> = plan
        .leaves
        .iter()
        .map(|&(_, hi)| match schedule {
            Schedule::Batch => 0.0,
            Schedule::Stream => (hi + 1) as f64 * plan.cycle_time,
        })
        .collect();
    // non-negative floats order like their bit patterns
    let key = |t: f64| t.to_bits();
    let mut heap = BinaryHeap::new();
    for (id, job) in plan.tree.iter().enumerate() {
        if let JobKind::Leaf { leaf } = job.kind {
            heap.push(std::cmp::Reverse((key(leaf_ready[leaf]), id)));
        }
    }
    let mut free = vec![0.0f64; workers.max(1)];
    let mut end = vec![f64::NAN; n];
    let mut child_end: Vec<(u8, f64)> = vec![(0, 0.0); n];
    while let Some(std::cmp::Reverse((ready_bits, id))) = heap.pop() {
        let ready = f64::from_bits(ready_bits);
        let (w, &at) = free.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0))).expect("a worker");
        let start = ready.max(at);
        end[id] = start + duration(id);
        free[w] = end[id];
        if let Some(p) = plan.tree[id].parent {
            let c = &mut child_end[p];
            c.0 += 1;
            c.1 = c.1.max(end[id]);
            if c.0 == 2 {
                heap.push(std::cmp::Reverse((key(c.1), p)));
            }
        }
    }
    let root_end = end[plan.root()];
    let first = leaf_ready.iter().copied().fold(f64::INFINITY, f64::min);
    let last_arrival = match schedule {
        Schedule::Batch => 0.0,
        Schedule::Stream => plan.layers() as f64 * plan.cycle_time,
    };
    let fusion_times =
        plan.tree.iter().enumerate().filter(|(_, j)| matches!(j.kind, JobKind::Fuse { .. })).map(|(id, _)| duration(id)).collect();
    TimingReport {
        decode_time: root_end - first,
        latency: root_end - last_arrival,
        rounds: plan.layers().saturating_sub(1),
        fusion_times,
        leaf_ready,
        job_end: end,
        wall_ns,
    }
}
