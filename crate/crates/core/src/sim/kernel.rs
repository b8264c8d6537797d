//! Event queue and the resource-level discrete-event engine.
//!
//! The engine knows nothing about images or seeds. A [`Job`] is a DAG of
//! [`Task`]s, each occupying one [`Resource`] for a fixed duration. Every
//! resource serves one task at a time, non-preemptively, taking waiting tasks
//! in request order: tasks of the job that arrived first go first, ties by
//! the order they became ready.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MegError, Result};

/// A node in the two-tier network. Serialized as `UE` / `ES<i>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Ue,
    Es(usize),
}

impl FromStr for Site {
    type Err = MegError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "UE" {
            return Ok(Site::Ue);
        }
        s.strip_prefix("ES")
            .and_then(|i| i.parse().ok())
            .map(Site::Es)
            .ok_or_else(|| MegError::param("site", format!("`{s}` is neither UE nor ES<i>")))
    }
}

impl Serialize for Site {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Ue => f.write_str("UE"),
            Site::Es(i) => write!(f, "ES{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        })
    }
}

/// Something that serves one task at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    Device(Site),
    /// Dedicated link between the UE and one edge server.
    Link { es: usize, direction: Direction },
    /// UE broadcast medium, heard by every edge server at once.
    Broadcast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub resource: Resource,
    pub duration: f64,
    pub depends_on: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub arrival: f64,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    RequestArrival { job: usize },
    StepReady { job: usize, task: usize },
    ComputeDone { job: usize, task: usize },
    TransmitDone { job: usize, task: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, u64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Min-queue on `(time, sequence)`; the sequence number is assigned on insert.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<(Key, usize)>>,
    slots: Vec<Option<EventKind>>,
    next_sequence: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) -> Result<u64> {
        if time.is_nan() || time < self.now {
            return Err(MegError::Scheduling(format!(
                "event at t={time} is before the clock t={}",
                self.now
            )));
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.slots.push(Some(kind));
        self.heap.push(Reverse((Key(time, sequence), self.slots.len() - 1)));
        Ok(sequence)
    }

    /// Pops the earliest event and advances the clock; `None` ends the simulation.
    pub fn next_event(&mut self) -> Option<Event> {
        let Reverse((Key(time, sequence), slot)) = self.heap.pop()?;
        let kind = self.slots[slot].take().expect("event slot consumed twice");
        self.now = time;
        Some(Event { time, sequence, kind })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskTiming {
    pub ready: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobTiming {
    pub tasks: Vec<TaskTiming>,
    pub completion: f64,
}

#[derive(Default)]
struct ResourceState {
    busy: bool,
    // (job rank, ready order, job, task)
    waiting: BTreeSet<(usize, u64, usize, usize)>,
}

fn validate_jobs(jobs: &[Job]) -> Result<()> {
    for (j, job) in jobs.iter().enumerate() {
        if !job.arrival.is_finite() || job.arrival < 0.0 {
            return Err(MegError::Scheduling(format!("job {j} has invalid arrival {}", job.arrival)));
        }
        for (t, task) in job.tasks.iter().enumerate() {
            if !(task.duration >= 0.0) || !task.duration.is_finite() {
                return Err(MegError::Scheduling(format!("job {j} task {t} has invalid duration")));
            }
            if let Some(&d) = task.depends_on.iter().find(|&&d| d >= t) {
                return Err(MegError::Scheduling(format!(
                    "job {j} task {t} depends on later task {d}"
                )));
            }
        }
    }
    Ok(())
}

/// Runs all jobs to completion and returns per-task timings.
pub fn simulate(jobs: &[Job]) -> Result<Vec<JobTiming>> {
    validate_jobs(jobs)?;
    // earlier arrival = higher priority; ties by job index
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| jobs[a].arrival.total_cmp(&jobs[b].arrival).then(a.cmp(&b)));
    let mut rank = vec![0; jobs.len()];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }

    let mut pending: Vec<Vec<usize>> = jobs
        .iter()
        .map(|j| j.tasks.iter().map(|t| t.depends_on.len()).collect())
        .collect();
    let mut dependents: Vec<Vec<Vec<usize>>> = jobs
        .iter()
        .map(|j| {
            let mut out = vec![Vec::new(); j.tasks.len()];
            for (t, task) in j.tasks.iter().enumerate() {
                for &d in &task.depends_on {
                    out[d].push(t);
                }
            }
            out
        })
        .collect();
    let mut timings: Vec<JobTiming> = jobs
        .iter()
        .map(|j| JobTiming {
            tasks: vec![TaskTiming::default(); j.tasks.len()],
            completion: j.arrival,
        })
        .collect();
    let mut remaining: Vec<usize> = jobs.iter().map(|j| j.tasks.len()).collect();

    let mut queue = EventQueue::new();
    for (j, job) in jobs.iter().enumerate() {
        queue.schedule(job.arrival, EventKind::RequestArrival { job: j })?;
    }
    let mut resources: BTreeMap<Resource, ResourceState> = BTreeMap::new();
    let mut ready_counter = 0u64;

    fn start_next(
        resource: Resource,
        resources: &mut BTreeMap<Resource, ResourceState>,
        jobs: &[Job],
        timings: &mut [JobTiming],
        queue: &mut EventQueue,
    ) -> Result<()> {
        let state = resources.entry(resource).or_default();
        if state.busy {
            return Ok(());
        }
        let Some(&entry) = state.waiting.iter().next() else {
            return Ok(());
        };
        state.waiting.remove(&entry);
        state.busy = true;
        let (_, _, j, t) = entry;
        let now = queue.now();
        let task = &jobs[j].tasks[t];
        timings[j].tasks[t].start = now;
        let kind = match task.resource {
            Resource::Device(_) => EventKind::ComputeDone { job: j, task: t },
            _ => EventKind::TransmitDone { job: j, task: t },
        };
        queue.schedule(now + task.duration, kind)?;
        Ok(())
    }

    while let Some(event) = queue.next_event() {
        match event.kind {
            EventKind::RequestArrival { job } => {
                for (t, &p) in pending[job].iter().enumerate() {
                    if p == 0 {
                        queue.schedule(event.time, EventKind::StepReady { job, task: t })?;
                    }
                }
            }
            EventKind::StepReady { job, task } => {
                timings[job].tasks[task].ready = event.time;
                let resource = jobs[job].tasks[task].resource;
                resources
                    .entry(resource)
                    .or_default()
                    .waiting
                    .insert((rank[job], ready_counter, job, task));
                ready_counter += 1;
                start_next(resource, &mut resources, jobs, &mut timings, &mut queue)?;
            }
            EventKind::ComputeDone { job, task } | EventKind::TransmitDone { job, task } => {
                timings[job].tasks[task].end = event.time;
                remaining[job] -= 1;
                if remaining[job] == 0 {
                    timings[job].completion = event.time;
                }
                // successors join their queues before this resource is released
                let mut touched = Vec::new();
                for &next in &std::mem::take(&mut dependents[job][task]) {
                    pending[job][next] -= 1;
                    if pending[job][next] == 0 {
                        timings[job].tasks[next].ready = event.time;
                        let r = jobs[job].tasks[next].resource;
                        resources
                            .entry(r)
                            .or_default()
                            .waiting
                            .insert((rank[job], ready_counter, job, next));
                        ready_counter += 1;
                        touched.push(r);
                    }
                }
                let resource = jobs[job].tasks[task].resource;
                if let Some(state) = resources.get_mut(&resource) {
                    state.busy = false;
                }
                start_next(resource, &mut resources, jobs, &mut timings, &mut queue)?;
                for r in touched {
                    start_next(r, &mut resources, jobs, &mut timings, &mut queue)?;
                }
            }
        }
    }
    Ok(timings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn stable_tie_break() {
        let mut q = EventQueue::new();
        q.schedule(1.0, EventKind::RequestArrival { job: 0 }).unwrap();
        q.schedule(1.0, EventKind::RequestArrival { job: 1 }).unwrap();
        q.schedule(2.0, EventKind::RequestArrival { job: 2 }).unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.next_event())
            .map(|e| match e.kind {
                EventKind::RequestArrival { job } => job,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, vec![0, 1, 2]);
        assert!(q.next_event().is_none());
    }

    #[test]
    fn past_events_rejected() {
        let mut q = EventQueue::new();
        q.schedule(2.0, EventKind::RequestArrival { job: 0 }).unwrap();
        q.next_event().unwrap();
        assert!(q.schedule(1.0, EventKind::RequestArrival { job: 1 }).is_err());
        assert!(q.schedule(2.0, EventKind::RequestArrival { job: 1 }).is_ok());
    }

    #[test]
    fn random_events_come_out_sorted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut q = EventQueue::new();
        let mut expected = Vec::new();
        for i in 0..10_000 {
            // coarse times force plenty of ties
            let t = f64::from(rng.random_range(0..500u32)) * 0.5;
            let seq = q.schedule(t, EventKind::RequestArrival { job: i }).unwrap();
            expected.push((t, seq, i));
        }
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got: Vec<_> = std::iter::from_fn(|| q.next_event())
            .map(|e| match e.kind {
                EventKind::RequestArrival { job } => (e.time, e.sequence, job),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got, expected);
    }

    fn chain(arrival: f64, durations: &[f64]) -> Job {
        Job {
            arrival,
            tasks: durations
                .iter()
                .enumerate()
                .map(|(i, &d)| Task {
                    resource: Resource::Device(Site::Ue),
                    duration: d,
                    depends_on: if i == 0 { vec![] } else { vec![i - 1] },
                })
                .collect(),
        }
    }

    #[test]
    fn serial_chain_sums() {
        let t = simulate(&[chain(0.5, &[0.25, 1.0, 0.25])]).unwrap();
        assert_eq!(t[0].completion - 0.5, 1.5);
    }

    #[test]
    fn request_order_fifo() {
        let jobs = [chain(0.0, &[0.125, 0.75, 0.125]), chain(0.0, &[0.125, 0.75, 0.125])];
        let t = simulate(&jobs).unwrap();
        assert_eq!(t[0].completion, 1.0);
        assert_eq!(t[1].completion, 2.0);
    }

    #[test]
    fn parallel_resources_overlap() {
        let job = Job {
            arrival: 0.0,
            tasks: vec![
                Task { resource: Resource::Device(Site::Es(0)), duration: 1.0, depends_on: vec![] },
                Task { resource: Resource::Device(Site::Es(1)), duration: 2.0, depends_on: vec![] },
                Task { resource: Resource::Device(Site::Ue), duration: 0.5, depends_on: vec![0, 1] },
            ],
        };
        let t = simulate(&[job]).unwrap();
        assert_eq!(t[0].tasks[2].start, 2.0);
        assert_eq!(t[0].completion, 2.5);
    }

    #[test]
    fn forward_dependency_rejected() {
        let job = Job {
            arrival: 0.0,
            tasks: vec![Task { resource: Resource::Broadcast, duration: 1.0, depends_on: vec![0] }],
        };
        assert!(simulate(&[job]).is_err());
    }
}
