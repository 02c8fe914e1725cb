//! Ciphertext cache that spills to disk and prefetches ahead of use.
//!
//! Resident entries are bounded by `capacity`; reads completing on reader
//! threads may briefly hold up to `reader_workers` more. Victims are chosen by
//! farthest next use in the access plan, least recently used otherwise.

use std::collections::{HashMap, VecDeque};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ckks::serialize::{ciphertext_from_bytes, ciphertext_to_bytes};
use crate::ckks::Ciphertext;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity: usize,
    pub reader_workers: usize,
    pub writer_workers: usize,
    pub spill_dir: PathBuf,
}

impl CacheConfig {
    pub fn new(capacity: usize, spill_dir: impl Into<PathBuf>) -> Self {
        Self {
            capacity,
            reader_workers: 2,
            writer_workers: 1,
            spill_dir: spill_dir.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheHandle(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryState {
    Resident,
    OnDisk,
    InFlight,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheCounters {
    /// `get` served from memory.
    pub hits: u64,
    /// `get` that had to issue a disk read itself.
    pub blocking_reads: u64,
    /// `get` that waited on a read already in flight.
    pub waits: u64,
    pub prefetch_reads: u64,
    pub writes: u64,
    pub checksum_failures: u64,
    pub peak_resident: u64,
}

enum Slot {
    Resident(Arc<Ciphertext>),
    /// Being written out; still readable from memory.
    Writing(Arc<Ciphertext>),
    OnDisk,
    Reading,
    Failed(String),
}

struct Entry {
    slot: Slot,
    pinned: bool,
    last_access: u64,
    checksum: Option<u64>,
}

#[derive(Default)]
struct State {
    entries: HashMap<u64, Entry>,
    next_id: u64,
    clock: u64,
    /// Upcoming access positions per id.
    plan: HashMap<u64, VecDeque<u64>>,
    /// Number of entries whose data is held in memory.
    in_memory: usize,
    /// Reads holding data but not yet admitted.
    pending_reads: usize,
    counters: CacheCounters,
    shutdown: bool,
}

impl State {
    fn note_peak(&mut self) {
        let now = (self.in_memory + self.pending_reads) as u64;
        self.counters.peak_resident = self.counters.peak_resident.max(now);
    }

    fn next_use(&self, id: u64) -> Option<u64> {
        self.plan.get(&id).and_then(|q| q.front().copied())
    }
}

/// Candidate for eviction: id, next planned use, last access tick.
#[derive(Debug, Clone, Copy)]
pub struct VictimCandidate {
    pub id: u64,
    pub next_use: Option<u64>,
    pub last_access: u64,
}

/// Farthest next use wins; entries never used again rank farthest, and ties
/// go to the least recently used.
pub fn select_victim(candidates: &[VictimCandidate]) -> Option<u64> {
    candidates
        .iter()
        .max_by(|a, b| {
            let fa = a.next_use.unwrap_or(u64::MAX);
            let fb = b.next_use.unwrap_or(u64::MAX);
            fa.cmp(&fb).then(b.last_access.cmp(&a.last_access))
        })
        .map(|c| c.id)
}

/// Misses of the eviction policy on an access sequence, from an empty cache.
pub fn simulate_policy(plan: &[u64], capacity: usize, use_plan: bool) -> usize {
    let mut resident: Vec<(u64, u64)> = Vec::new(); // (id, last_access)
    let mut misses = 0;
    for (t, &id) in plan.iter().enumerate() {
        if let Some(e) = resident.iter_mut().find(|e| e.0 == id) {
            e.1 = t as u64;
            continue;
        }
        misses += 1;
        if resident.len() >= capacity {
            let cands: Vec<VictimCandidate> = resident
                .iter()
                .map(|&(rid, last)| VictimCandidate {
                    id: rid,
                    next_use: if use_plan {
                        plan[t + 1..]
                            .iter()
                            .position(|&x| x == rid)
                            .map(|p| (t + 1 + p) as u64)
                    } else {
                        None
                    },
                    last_access: last,
                })
                .collect();
            let v = select_victim(&cands).unwrap();
            resident.retain(|e| e.0 != v);
        }
        resident.push((id, t as u64));
    }
    misses
}

enum Task {
    Read(u64),
    Write(u64, Arc<Ciphertext>),
}

struct Inner {
    cfg: CacheConfig,
    state: Mutex<State>,
    cond: Condvar,
    read_tx: Mutex<Option<Sender<Task>>>,
    write_tx: Mutex<Option<Sender<Task>>>,
}

pub struct CiphertextCache {
    inner: Arc<Inner>,
    workers: Vec<JoinHandle<()>>,
}

impl std::fmt::Debug for CiphertextCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CiphertextCache")
            .field("config", &self.inner.cfg)
            .finish()
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

impl Inner {
    fn path(&self, id: u64) -> PathBuf {
        self.cfg.spill_dir.join(format!("{id:016x}.ct"))
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().expect("cache state poisoned")
    }

    fn send(&self, tx: &Mutex<Option<Sender<Task>>>, task: Task) {
        if let Some(tx) = tx.lock().unwrap().as_ref() {
            let _ = tx.send(task);
        }
    }

    /// Starts writing out one victim; returns false when nothing is evictable.
    fn evict_one(&self, st: &mut State, protect: Option<u64>) -> bool {
        let cands: Vec<VictimCandidate> = st
            .entries
            .iter()
            .filter(|(id, e)| !e.pinned && Some(**id) != protect && matches!(e.slot, Slot::Resident(_)))
            .map(|(&id, e)| VictimCandidate {
                id,
                next_use: st.next_use(id),
                last_access: e.last_access,
            })
            .collect();
        let Some(victim) = select_victim(&cands) else {
            return false;
        };
        let e = st.entries.get_mut(&victim).unwrap();
        let ct = match &e.slot {
            Slot::Resident(ct) => ct.clone(),
            _ => unreachable!(),
        };
        e.slot = Slot::Writing(ct.clone());
        self.send(&self.write_tx, Task::Write(victim, ct));
        true
    }

    fn writing_count(st: &State) -> usize {
        st.entries
            .values()
            .filter(|e| matches!(e.slot, Slot::Writing(_)))
            .count()
    }

    /// Blocks until one more entry fits under capacity.
    fn make_room<'a>(&'a self, mut st: MutexGuard<'a, State>, protect: Option<u64>) -> Result<MutexGuard<'a, State>> {
        while st.in_memory >= self.cfg.capacity {
            while st.in_memory - Self::writing_count(&st) >= self.cfg.capacity {
                if !self.evict_one(&mut st, protect) {
                    break;
                }
            }
            if Self::writing_count(&st) == 0 {
                return Err(Error::Cache("cache full of pinned entries".into()));
            }
            st = self.cond.wait(st).unwrap();
            if st.shutdown {
                return Err(Error::Cache("cache shut down".into()));
            }
        }
        Ok(st)
    }

    fn do_write(&self, id: u64, ct: Arc<Ciphertext>) {
        let bytes = ciphertext_to_bytes(&ct);
        let sum = checksum(&bytes);
        let path = self.path(id);
        let res = (|| -> std::io::Result<()> {
            let mut f = std::fs::File::create(&path)?;
            f.write_all(&sum.to_le_bytes())?;
            f.write_all(&bytes)?;
            f.flush()?;
            let mut m = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.cfg.spill_dir.join("manifest.tsv"))?;
            writeln!(m, "{id}\t{}\t{sum:016x}\t{}", path.display(), bytes.len())
        })();
        let mut st = self.lock();
        st.counters.writes += 1;
        if let Some(e) = st.entries.get_mut(&id) {
            match res {
                Ok(()) => {
                    e.checksum = Some(sum);
                    if matches!(e.slot, Slot::Writing(_)) {
                        e.slot = Slot::OnDisk;
                        st.in_memory -= 1;
                    }
                }
                Err(err) => {
                    log::error!("spill of {id} failed: {err}");
                    if let Slot::Writing(ct) = &e.slot {
                        e.slot = Slot::Resident(ct.clone());
                    }
                }
            }
        }
        drop(st);
        self.cond.notify_all();
    }

    fn do_read(&self, id: u64) {
        let Some(expected) = ({
            let st = self.lock();
            match st.entries.get(&id) {
                Some(e) if matches!(e.slot, Slot::Reading) => e.checksum,
                _ => return,
            }
        }) else {
            return;
        };
        let path = self.path(id);
        let outcome = std::fs::read(&path)
            .map_err(|e| format!("read {}: {e}", path.display()))
            .and_then(|buf| {
                if buf.len() < 8 {
                    return Err("truncated spill file".into());
                }
                let stored = u64::from_le_bytes(buf[..8].try_into().unwrap());
                let body = &buf[8..];
                if stored != expected || checksum(body) != expected {
                    return Err("checksum".into());
                }
                ciphertext_from_bytes(body).map_err(|e| e.to_string())
            });
        let mut st = self.lock();
        match outcome {
            Ok(ct) => {
                st.pending_reads += 1;
                st.note_peak();
                match self.make_room(st, Some(id)) {
                    Ok(mut s) => {
                        s.pending_reads -= 1;
                        if let Some(e) = s.entries.get_mut(&id) {
                            if matches!(e.slot, Slot::Reading) {
                                e.slot = Slot::Resident(Arc::new(ct));
                                s.in_memory += 1;
                                s.note_peak();
                            }
                        }
                    }
                    Err(err) => {
                        let mut s = self.lock();
                        s.pending_reads -= 1;
                        if let Some(e) = s.entries.get_mut(&id) {
                            e.slot = Slot::Failed(err.to_string());
                        }
                    }
                }
            }
            Err(msg) => {
                if msg == "checksum" {
                    st.counters.checksum_failures += 1;
                }
                if let Some(e) = st.entries.get_mut(&id) {
                    e.slot = Slot::Failed(msg);
                }
            }
        }
        self.cond.notify_all();
    }
}

fn spawn_worker(inner: Arc<Inner>, rx: Arc<Mutex<Receiver<Task>>>) -> JoinHandle<()> {
    std::thread::spawn(move || loop {
        let task = {
            let rx = rx.lock().unwrap();
            rx.recv()
        };
        match task {
            Ok(Task::Read(id)) => inner.do_read(id),
            Ok(Task::Write(id, ct)) => inner.do_write(id, ct),
            Err(_) => break,
        }
    })
}

impl CiphertextCache {
    pub fn new(cfg: CacheConfig) -> Result<Self> {
        if cfg.capacity == 0 || cfg.reader_workers == 0 || cfg.writer_workers == 0 {
            return Err(Error::Cache("capacity and worker counts must be positive".into()));
        }
        if cfg.capacity < 2 + cfg.reader_workers {
            log::warn!(
                "cache capacity {} below 2 + reader_workers = {}; prefetch cannot run ahead",
                cfg.capacity,
                2 + cfg.reader_workers
            );
        }
        std::fs::create_dir_all(&cfg.spill_dir)
            .map_err(|e| Error::Cache(format!("spill directory {}: {e}", cfg.spill_dir.display())))?;
        let probe = cfg.spill_dir.join(".write_probe");
        std::fs::write(&probe, b"")
            .map_err(|e| Error::Cache(format!("spill directory {} not writable: {e}", cfg.spill_dir.display())))?;
        let _ = std::fs::remove_file(probe);

        let (read_tx, read_rx) = channel();
        let (write_tx, write_rx) = channel();
        let inner = Arc::new(Inner {
            cfg: cfg.clone(),
            state: Mutex::new(State::default()),
            cond: Condvar::new(),
            read_tx: Mutex::new(Some(read_tx)),
            write_tx: Mutex::new(Some(write_tx)),
        });
        let read_rx = Arc::new(Mutex::new(read_rx));
        let write_rx = Arc::new(Mutex::new(write_rx));
        let mut workers = Vec::new();
        for _ in 0..cfg.reader_workers {
            workers.push(spawn_worker(inner.clone(), read_rx.clone()));
        }
        for _ in 0..cfg.writer_workers {
            workers.push(spawn_worker(inner.clone(), write_rx.clone()));
        }
        Ok(Self { inner, workers })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.inner.cfg
    }

    /// Adds a ciphertext, spilling a victim first if the cache is full.
    pub fn put(&self, ct: Ciphertext) -> Result<CacheHandle> {
        let st = self.inner.lock();
        let mut st = self.inner.make_room(st, None)?;
        let id = st.next_id;
        st.next_id += 1;
        st.clock += 1;
        let clock = st.clock;
        st.entries.insert(
            id,
            Entry {
                slot: Slot::Resident(Arc::new(ct)),
                pinned: false,
                last_access: clock,
                checksum: None,
            },
        );
        st.in_memory += 1;
        st.note_peak();
        Ok(CacheHandle(id))
    }

    /// Returns the ciphertext, reading it from disk if necessary.
    pub fn get(&self, h: CacheHandle) -> Result<Arc<Ciphertext>> {
        let mut st = self.inner.lock();
        let mut counted = false;
        loop {
            let e = st
                .entries
                .get(&h.0)
                .ok_or_else(|| Error::Cache(format!("unknown handle {}", h.0)))?;
            match &e.slot {
                Slot::Resident(ct) | Slot::Writing(ct) => {
                    let ct = ct.clone();
                    if !counted {
                        st.counters.hits += 1;
                    }
                    st.clock += 1;
                    let clock = st.clock;
                    st.entries.get_mut(&h.0).unwrap().last_access = clock;
                    if let Some(q) = st.plan.get_mut(&h.0) {
                        q.pop_front();
                    }
                    return Ok(ct);
                }
                Slot::OnDisk => {
                    st.counters.blocking_reads += 1;
                    counted = true;
                    st.entries.get_mut(&h.0).unwrap().slot = Slot::Reading;
                    self.inner.send(&self.inner.read_tx, Task::Read(h.0));
                }
                Slot::Reading => {
                    if !counted {
                        st.counters.waits += 1;
                        counted = true;
                    }
                }
                Slot::Failed(msg) => {
                    return Err(if msg == "checksum" {
                        Error::Checksum(self.inner.path(h.0))
                    } else {
                        Error::Cache(msg.clone())
                    });
                }
            }
            st = self.inner.cond.wait(st).unwrap();
        }
    }

    /// Schedules background reads for on-disk handles.
    pub fn prefetch(&self, hs: &[CacheHandle]) -> Result<()> {
        let mut st = self.inner.lock();
        for h in hs {
            let e = st
                .entries
                .get_mut(&h.0)
                .ok_or_else(|| Error::Cache(format!("unknown handle {}", h.0)))?;
            match &e.slot {
                Slot::OnDisk => {
                    e.slot = Slot::Reading;
                    st.counters.prefetch_reads += 1;
                    self.inner.send(&self.inner.read_tx, Task::Read(h.0));
                }
                Slot::Writing(ct) => {
                    // keep it, the finished write will leave it alone
                    e.slot = Slot::Resident(ct.clone());
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Replaces the access plan used to rank eviction victims.
    pub fn schedule(&self, plan: &[CacheHandle]) {
        let mut st = self.inner.lock();
        let base = st.clock;
        st.plan.clear();
        for (i, h) in plan.iter().enumerate() {
            st.plan.entry(h.0).or_default().push_back(base + 1 + i as u64);
        }
    }

    pub fn pin(&self, h: CacheHandle, pinned: bool) -> Result<()> {
        let mut st = self.inner.lock();
        st.entries
            .get_mut(&h.0)
            .ok_or_else(|| Error::Cache(format!("unknown handle {}", h.0)))?
            .pinned = pinned;
        Ok(())
    }

    /// Drops an entry and its spill file.
    pub fn remove(&self, h: CacheHandle) -> Result<()> {
        let mut st = self.inner.lock();
        let e = st
            .entries
            .remove(&h.0)
            .ok_or_else(|| Error::Cache(format!("unknown handle {}", h.0)))?;
        if matches!(e.slot, Slot::Resident(_) | Slot::Writing(_)) {
            st.in_memory -= 1;
        }
        st.plan.remove(&h.0);
        drop(st);
        let _ = std::fs::remove_file(self.inner.path(h.0));
        self.inner.cond.notify_all();
        Ok(())
    }

    pub fn state(&self, h: CacheHandle) -> Option<EntryState> {
        let st = self.inner.lock();
        st.entries.get(&h.0).map(|e| match e.slot {
            Slot::Resident(_) => EntryState::Resident,
            Slot::OnDisk | Slot::Failed(_) => EntryState::OnDisk,
            Slot::Writing(_) | Slot::Reading => EntryState::InFlight,
        })
    }

    /// Ciphertexts currently held in memory by the cache.
    pub fn resident_count(&self) -> usize {
        let st = self.inner.lock();
        st.in_memory + st.pending_reads
    }

    pub fn counters(&self) -> CacheCounters {
        self.inner.lock().counters
    }

    /// Blocks until no writes or reads are outstanding.
    pub fn quiesce(&self) {
        let mut st = self.inner.lock();
        while st
            .entries
            .values()
            .any(|e| matches!(e.slot, Slot::Writing(_) | Slot::Reading))
        {
            st = self.inner.cond.wait(st).unwrap();
        }
    }

    pub fn spill_path(&self, h: CacheHandle) -> PathBuf {
        self.inner.path(h.0)
    }

    pub fn spill_dir(&self) -> &Path {
        &self.inner.cfg.spill_dir
    }
}

impl Drop for CiphertextCache {
    fn drop(&mut self) {
        {
            let mut st = self.inner.lock();
            st.shutdown = true;
        }
        self.inner.cond.notify_all();
        self.inner.read_tx.lock().unwrap().take();
        self.inner.write_tx.lock().unwrap().take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn farthest_next_use_is_evicted() {
        // plan a b a c, capacity 2: when c arrives, a is needed again sooner? no,
        // after a's second use only c remains, so both a and b are dead; b is older.
        let c = [
            VictimCandidate { id: 0, next_use: Some(2), last_access: 0 },
            VictimCandidate { id: 1, next_use: None, last_access: 1 },
        ];
        assert_eq!(select_victim(&c), Some(1));
    }

    #[test]
    fn no_plan_is_lru() {
        let c = [
            VictimCandidate { id: 0, next_use: None, last_access: 5 },
            VictimCandidate { id: 1, next_use: None, last_access: 2 },
            VictimCandidate { id: 2, next_use: None, last_access: 9 },
        ];
        assert_eq!(select_victim(&c), Some(1));
    }

    #[test]
    fn simulated_plan_a_b_a_c() {
        // a=0 b=1 c=2
        assert_eq!(simulate_policy(&[0, 1, 0, 2], 2, true), 3);
    }
}
