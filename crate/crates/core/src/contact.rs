//! Per-step proximity detection.
//!
//! Only infectious agents are indexed; every other agent in space probes the
//! 3×3 block of cells around its own cell. A coarse occupancy mask over
//! blocks of cells lets the (usually empty) probes exit after one lookup.

use rustc_hash::FxHashMap;

use crate::domain::{Agent, Point};
use crate::mobility::ClockTime;

/// One infectious agent within contact range of another agent during a
/// step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContactEvent {
    pub infector_id: usize,
    pub other_id: usize,
    pub day: u32,
    pub step: ClockTime,
}

type Cell = (i64, i64);

/// Cells per side of a coarse block.
const BLOCK: i64 = 16;

#[derive(Debug, Clone, Default)]
struct BlockMask {
    origin: Cell,
    width: i64,
    height: i64,
    bits: Vec<bool>,
}

impl BlockMask {
    fn rebuild<'a>(&mut self, cells: impl Iterator<Item = &'a Cell> + Clone) {
        self.bits.clear();
        self.width = 0;
        self.height = 0;
        let block_span = |c: &Cell| {
            (
                ((c.0 - 1).div_euclid(BLOCK), (c.0 + 1).div_euclid(BLOCK)),
                ((c.1 - 1).div_euclid(BLOCK), (c.1 + 1).div_euclid(BLOCK)),
            )
        };
        let mut bounds: Option<(i64, i64, i64, i64)> = None;
        for c in cells.clone() {
            let ((x0, x1), (y0, y1)) = block_span(c);
            bounds = Some(match bounds {
                None => (x0, x1, y0, y1),
                Some((a, b, p, q)) => (a.min(x0), b.max(x1), p.min(y0), q.max(y1)),
            });
        }
        let Some((bx0, bx1, by0, by1)) = bounds else {
            return;
        };
        self.origin = (bx0, by0);
        self.width = bx1 - bx0 + 1;
        self.height = by1 - by0 + 1;
        self.bits.resize((self.width * self.height) as usize, false);
        for c in cells {
            let ((x0, x1), (y0, y1)) = block_span(c);
            for bx in x0..=x1 {
                for by in y0..=y1 {
                    let k = (by - by0) * self.width + (bx - bx0);
                    self.bits[k as usize] = true;
                }
            }
        }
    }

    fn block_of(cell: Cell) -> Cell {
        (cell.0.div_euclid(BLOCK), cell.1.div_euclid(BLOCK))
    }

    /// False only if no indexed cell lies within one cell of any cell in
    /// `block`.
    fn may_contain(&self, block: Cell) -> bool {
        let bx = block.0 - self.origin.0;
        let by = block.1 - self.origin.1;
        if bx < 0 || by < 0 || bx >= self.width || by >= self.height {
            return false;
        }
        self.bits[(by * self.width + bx) as usize]
    }
}

// `f64::floor` is a libm call on baseline x86-64; this sits on the hot path.
#[inline]
fn floor_i64(v: f64) -> i64 {
    let t = v as i64;
    t - i64::from(v < t as f64)
}

/// Uniform grid over a set of agents; cell = `floor(position / cell_size)`.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell_size: f64,
    cells: FxHashMap<Cell, Vec<(usize, Point)>>,
    mask: BlockMask,
    len: usize,
}

impl SpatialIndex {
    pub fn new(cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        SpatialIndex {
            cell_size,
            cells: FxHashMap::default(),
            mask: BlockMask::default(),
            len: 0,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cell_of(&self, p: Point) -> (i64, i64) {
        (floor_i64(p.x / self.cell_size), floor_i64(p.y / self.cell_size))
    }

    /// Replaces the contents with `positions`.
    pub fn rebuild(&mut self, positions: impl IntoIterator<Item = (usize, Point)>) {
        self.cells.clear();
        self.len = 0;
        for (id, p) in positions {
            let cell = self.cell_of(p);
            self.cells.entry(cell).or_default().push((id, p));
            self.len += 1;
        }
        self.mask.rebuild(self.cells.keys());
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Ids stored in `cell`, in insertion order.
    pub fn ids_in(&self, cell: (i64, i64)) -> Vec<usize> {
        self.cells
            .get(&cell)
            .map(|v| v.iter().map(|&(id, _)| id).collect())
            .unwrap_or_default()
    }

    /// Indexed ids within `radius` (inclusive) of `p`, ascending. `radius`
    /// must not exceed the cell size.
    #[inline]
    pub fn within(&self, p: Point, radius: f64, out: &mut Vec<usize>) {
        let cell = self.cell_of(p);
        self.within_cell(p, cell, radius, out);
    }

    /// [`within`](Self::within) with `cell == self.cell_of(p)` precomputed.
    #[inline]
    fn within_cell(&self, p: Point, (cx, cy): Cell, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        if !self.mask.may_contain(BlockMask::block_of((cx, cy))) {
            return;
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(entries) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(
                        entries
                            .iter()
                            .filter(|(_, q)| q.distance(p) <= radius)
                            .map(|&(id, _)| id),
                    );
                }
            }
        }
        if out.len() > 1 {
            out.sort_unstable();
        }
    }
}

pub fn build_index(positions: impl IntoIterator<Item = (usize, Point)>, cell_size: f64) -> SpatialIndex {
    let mut index = SpatialIndex::new(cell_size);
    index.rebuild(positions);
    index
}

/// Reusable contact detector; keeps its index and buffers between steps.
#[derive(Debug, Clone)]
pub struct ContactScanner {
    index: SpatialIndex,
    radius: f64,
    hits: Vec<usize>,
    // Most agents stand still between steps; remember each one's cell.
    cell_cache: Vec<(Point, Cell)>,
}

impl ContactScanner {
    pub fn new(radius: f64) -> Self {
        ContactScanner {
            index: SpatialIndex::new(radius),
            radius,
            hits: Vec::new(),
            cell_cache: Vec::new(),
        }
    }

    /// Appends this step's contacts to `out`, sorted by
    /// `(other_id, infector_id)`. `agents[k].id` must equal `k`.
    pub fn scan(&mut self, agents: &[Agent], day: u32, step: ClockTime, out: &mut Vec<ContactEvent>) {
        let infectors: Vec<usize> = agents.iter().filter(|a| a.is_active_infector()).map(|a| a.id).collect();
        self.scan_among(agents, &infectors, day, step, out);
    }

    /// Like [`scan`](Self::scan) with the active infectors given in
    /// ascending order; they cannot change within a day.
    pub fn scan_among(
        &mut self,
        agents: &[Agent],
        infectors: &[usize],
        day: u32,
        step: ClockTime,
        out: &mut Vec<ContactEvent>,
    ) {
        debug_assert!(infectors.iter().all(|&i| agents[i].is_active_infector()));
        self.index.rebuild(infectors.iter().map(|&i| (i, agents[i].position)));
        if self.index.is_empty() {
            return;
        }
        if self.cell_cache.len() < agents.len() {
            let stale = Point::new(f64::NAN, f64::NAN);
            self.cell_cache.resize(agents.len(), (stale, (0, 0)));
        }
        for (other, cached) in agents.iter().zip(self.cell_cache.iter_mut()) {
            if !other.in_space() {
                continue;
            }
            if cached.0 != other.position {
                *cached = (other.position, self.index.cell_of(other.position));
            }
            self.index
                .within_cell(other.position, cached.1, self.radius, &mut self.hits);
            for &infector_id in &self.hits {
                if infector_id != other.id {
                    out.push(ContactEvent {
                        infector_id,
                        other_id: other.id,
                        day,
                        step,
                    });
                }
            }
        }
    }
}

/// Cell occupancy of every agent in space, updated as agents move. Contact
/// queries start from the (few) infectors instead of probing every agent.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    cell_size: f64,
    cells: FxHashMap<Cell, Vec<usize>>,
    keys: Vec<u64>,
}

impl OccupancyGrid {
    pub fn new(cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        OccupancyGrid {
            cell_size,
            cells: FxHashMap::default(),
            keys: Vec::new(),
        }
    }

    pub fn cell_of(&self, p: Point) -> Cell {
        (floor_i64(p.x / self.cell_size), floor_i64(p.y / self.cell_size))
    }

    /// Replaces the contents with every agent in space.
    pub fn rebuild(&mut self, agents: &[Agent]) {
        for v in self.cells.values_mut() {
            v.clear();
        }
        for a in agents.iter().filter(|a| a.in_space()) {
            let cell = self.cell_of(a.position);
            self.cells.entry(cell).or_default().push(a.id);
        }
    }

    /// Records that agent `id` moved from `from` to `to`.
    pub fn relocate(&mut self, id: usize, from: Point, to: Point) {
        let (old, new) = (self.cell_of(from), self.cell_of(to));
        if old == new {
            return;
        }
        if let Some(v) = self.cells.get_mut(&old) {
            if let Some(k) = v.iter().position(|&x| x == id) {
                v.swap_remove(k);
            }
        }
        self.cells.entry(new).or_default().push(id);
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.values().all(Vec::is_empty)
    }

    /// Appends the contacts of `infectors` (active infectors in ascending id)
    /// to `out`, sorted by `(other_id, infector_id)`. Gives the same events as
    /// [`ContactScanner::scan`] when the grid matches `agents`.
    pub fn contacts(
        &mut self,
        agents: &[Agent],
        infectors: &[usize],
        radius: f64,
        day: u32,
        step: ClockTime,
        out: &mut Vec<ContactEvent>,
    ) {
        debug_assert!(radius <= self.cell_size);
        // Sorting packed (other, infector) keys is much cheaper than sorting
        // the events themselves.
        self.keys.clear();
        for &infector_id in infectors {
            let p = agents[infector_id].position;
            let (cx, cy) = self.cell_of(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) else {
                        continue;
                    };
                    for &other_id in ids {
                        if other_id != infector_id && agents[other_id].position.distance(p) <= radius {
                            self.keys.push(((other_id as u64) << 32) | infector_id as u64);
                        }
                    }
                }
            }
        }
        self.keys.sort_unstable();
        out.extend(self.keys.iter().map(|&k| ContactEvent {
            infector_id: (k & 0xffff_ffff) as usize,
            other_id: (k >> 32) as usize,
            day,
            step,
        }));
    }
}

/// All contacts of one step: every active infector paired with every other
/// agent in space at distance `<= radius`.
pub fn contacts_for_step(agents: &[Agent], radius: f64, day: u32, step: ClockTime) -> Vec<ContactEvent> {
    let mut out = Vec::new();
    ContactScanner::new(radius).scan(agents, day, step, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_population, validate_config, InfectionState, ScenarioConfig};

    fn agents_at(points: &[(f64, f64, InfectionState)]) -> Vec<Agent> {
        let cfg = validate_config(ScenarioConfig::default()).unwrap();
        let template = build_population(&cfg, 1).agents[0].clone();
        points
            .iter()
            .enumerate()
            .map(|(id, &(x, y, state))| Agent {
                id,
                state,
                position: Point::new(x, y),
                ..template.clone()
            })
            .collect()
    }

    fn step0() -> ClockTime {
        ClockTime::new(0).unwrap()
    }

    #[test]
    fn fast_floor_matches_floor() {
        for v in [-2.5, -1.0, -0.5, -0.0, 0.0, 0.3, 1.0, 999.999, 1000.0, -1e-12] {
            assert_eq!(floor_i64(v), v.floor() as i64, "{v}");
        }
    }

    #[test]
    fn empty_index() {
        let idx = build_index(std::iter::empty(), 1.0);
        assert!(idx.is_empty());
        let mut out = vec![1];
        idx.within(Point::new(3.0, 3.0), 1.0, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn single_agent_cell() {
        let idx = build_index([(4, Point::new(5.5, 5.5))], 1.0);
        assert_eq!(idx.cell_of(Point::new(5.5, 5.5)), (5, 5));
        assert_eq!(idx.ids_in((5, 5)), vec![4]);
    }

    #[test]
    fn counts_every_agent_once() {
        let cfg = validate_config(ScenarioConfig::default()).unwrap();
        let pop = build_population(&cfg, 2);
        let idx = build_index(pop.agents.iter().map(|a| (a.id, a.position)), 1.0);
        assert_eq!(idx.len(), 999);
    }

    #[test]
    fn boundary_is_inclusive() {
        let agents = agents_at(&[(0.0, 0.0, InfectionState::I), (0.6, 0.8, InfectionState::S)]);
        let events = contacts_for_step(&agents, 1.0, 1, step0());
        assert_eq!(events.len(), 1);
        assert_eq!((events[0].infector_id, events[0].other_id), (0, 1));
    }

    #[test]
    fn just_outside_range() {
        let agents = agents_at(&[(0.0, 0.0, InfectionState::I), (0.8, 0.8, InfectionState::S)]);
        assert!(contacts_for_step(&agents, 1.0, 1, step0()).is_empty());
    }

    #[test]
    fn cohabitants_with_one_infector() {
        let agents = agents_at(&[
            (10.0, 10.0, InfectionState::S),
            (10.0, 10.0, InfectionState::I),
            (10.0, 10.0, InfectionState::R),
        ]);
        let events = contacts_for_step(&agents, 1.0, 3, step0());
        let pairs: Vec<_> = events.iter().map(|e| (e.infector_id, e.other_id)).collect();
        assert_eq!(pairs, vec![(1, 0), (1, 2)]);
    }

    #[test]
    fn infectors_see_each_other_but_not_dead_or_hospitalized() {
        let mut agents = agents_at(&[
            (0.0, 0.0, InfectionState::I),
            (0.5, 0.0, InfectionState::I),
            (0.2, 0.0, InfectionState::D),
            (0.3, 0.0, InfectionState::I),
        ]);
        agents[3].hospitalized = true;
        let events = contacts_for_step(&agents, 1.0, 1, step0());
        let pairs: Vec<_> = events.iter().map(|e| (e.infector_id, e.other_id)).collect();
        assert_eq!(pairs, vec![(1, 0), (0, 1)]);
    }

    #[test]
    fn occupancy_grid_agrees_with_scanner_after_moves() {
        let mut agents = agents_at(&[
            (10.0, 10.0, InfectionState::I),
            (10.5, 10.0, InfectionState::S),
            (12.0, 10.0, InfectionState::S),
            (11.0, 10.0, InfectionState::I),
            (50.0, 50.0, InfectionState::R),
        ]);
        let mut grid = OccupancyGrid::new(1.0);
        grid.rebuild(&agents);
        assert_eq!(grid.len(), 5);
        let moves = [
            (2, Point::new(11.9, 10.0)),
            (4, Point::new(10.2, 10.9)),
            (0, Point::new(30.0, 30.0)),
        ];
        for (id, to) in moves {
            grid.relocate(id, agents[id].position, to);
            agents[id].position = to;
            let infectors: Vec<usize> = agents.iter().filter(|a| a.is_active_infector()).map(|a| a.id).collect();
            let mut fast = Vec::new();
            grid.contacts(&agents, &infectors, 1.0, 1, step0(), &mut fast);
            assert_eq!(fast, contacts_for_step(&agents, 1.0, 1, step0()));
        }
    }

    #[test]
    fn negative_and_cell_edge_coordinates() {
        let agents = agents_at(&[
            (-0.5, 15.99, InfectionState::I),
            (0.3, 16.2, InfectionState::S),
            (31.9, 0.0, InfectionState::I),
            (32.1, 0.5, InfectionState::S),
        ]);
        let events = contacts_for_step(&agents, 1.0, 1, step0());
        let pairs: Vec<_> = events.iter().map(|e| (e.infector_id, e.other_id)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3)]);
    }
}
