//! Task designs over the operating box: full factorials, orthogonal arrays and
//! a balanced maximin Latin-hypercube fallback.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_unchecked, OperatingCondition, PhysicalRanges, VarRange};

pub const TASK_TABLE_HEADER: [&str; 5] = ["task", "Tin1", "Tin2", "Tin3", "m1"];
pub const DEFAULT_DESIGN_CAP: usize = 100_000;
pub const FF315_LEVELS: [usize; 4] = [7, 5, 3, 3];

const VALIDATION_CSV: &str = include_str!("../data/validation_tasks.csv");
const TEST_CSV: &str = include_str!("../data/test_tasks.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    FullFactorial,
    OrthogonalArray,
    /// Balanced maximin Latin hypercube used where no orthogonal array exists.
    OaApproximate,
    /// Loaded from a file.
    Table,
}

impl DesignKind {
    pub fn label(&self) -> &'static str {
        match self {
            DesignKind::FullFactorial => "full-factorial",
            DesignKind::OrthogonalArray => "OA",
            DesignKind::OaApproximate => "OA-approximate",
            DesignKind::Table => "table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub count: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDesign {
    pub name: String,
    pub kind: DesignKind,
    pub tasks: Vec<OperatingCondition>,
    /// Empty for designs loaded from tables.
    pub level_spec: Vec<LevelSpec>,
}

impl TaskDesign {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Centroid in physical units.
    pub fn centroid(&self) -> Option<OperatingCondition> {
        if self.tasks.is_empty() {
            return None;
        }
        let mut acc = [0.0; 4];
        for t in &self.tasks {
            for (a, v) in acc.iter_mut().zip(t.to_array()) {
                *a += v;
            }
        }
        Some(OperatingCondition::from_array(acc.map(|a| a / self.tasks.len() as f64)))
    }
}

/// `count` equally spaced values over `r`, endpoints included; a single level sits at the midpoint.
pub fn level_values(r: &VarRange, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![r.midpoint()],
        _ => (0..count)
            .map(|i| {
                if i == count - 1 {
                    r.max
                } else {
                    r.min + r.span() * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

fn level_specs(r: &PhysicalRanges, levels: [usize; 4]) -> Vec<LevelSpec> {
    r.as_array()
        .iter()
        .zip(levels)
        .map(|(vr, c)| LevelSpec {
            count: c,
            values: level_values(vr, c),
        })
        .collect()
}

fn from_indices(specs: &[LevelSpec], rows: &[[usize; 4]]) -> Vec<OperatingCondition> {
    rows.iter()
        .map(|idx| OperatingCondition::from_array(std::array::from_fn(|v| specs[v].values[idx[v]])))
        .collect()
}

pub fn full_factorial(r: &PhysicalRanges, levels: [usize; 4]) -> Result<TaskDesign> {
    full_factorial_capped(r, levels, DEFAULT_DESIGN_CAP)
}

pub fn full_factorial_capped(r: &PhysicalRanges, levels: [usize; 4], cap: usize) -> Result<TaskDesign> {
    r.validate()?;
    if levels.contains(&0) {
        return Err(Error::validation("every variable needs at least one level"));
    }
    let size = levels
        .iter()
        .try_fold(1usize, |a, l| a.checked_mul(*l))
        .filter(|s| *s <= cap)
        .ok_or_else(|| Error::validation(format!("full factorial {levels:?} exceeds the cap of {cap} tasks")))?;
    let specs = level_specs(r, levels);
    let mut rows = Vec::with_capacity(size);
    for a in 0..levels[0] {
        for b in 0..levels[1] {
            for c in 0..levels[2] {
                for d in 0..levels[3] {
                    rows.push([a, b, c, d]);
                }
            }
        }
    }
    Ok(TaskDesign {
        name: format!("FF{size}"),
        kind: DesignKind::FullFactorial,
        tasks: from_indices(&specs, &rows),
        level_spec: specs,
    })
}

/// Arithmetic in GF(q) for the prime orders and q = 4.
struct Field {
    q: usize,
    add: Vec<usize>,
    mul: Vec<usize>,
}

impl Field {
    fn new(q: usize) -> Option<Self> {
        let is_prime = q >= 2 && (2..q).take_while(|d| d * d <= q).all(|d| !q.is_multiple_of(d));
        if is_prime {
            return Some(Self {
                q,
                add: (0..q * q).map(|i| (i / q + i % q) % q).collect(),
                mul: (0..q * q).map(|i| (i / q) * (i % q) % q).collect(),
            });
        }
        if q == 4 {
            // Elements 0, 1, x, x+1 as bit patterns modulo x² + x + 1.
            let mul = |a: usize, b: usize| {
                let mut p = 0;
                for i in 0..2 {
                    if b >> i & 1 == 1 {
                        p ^= a << i;
                    }
                }
                if p & 4 != 0 {
                    p ^= 0b111;
                }
                p
            };
            return Some(Self {
                q,
                add: (0..16).map(|i| (i / 4) ^ (i % 4)).collect(),
                mul: (0..16).map(|i| mul(i / 4, i % 4)).collect(),
            });
        }
        None
    }

    fn add(&self, a: usize, b: usize) -> usize {
        self.add[a * self.q + b]
    }

    fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a * self.q + b]
    }
}

/// Linear orthogonal array OA(q^k, 4, q, 2): rows are all vectors of GF(q)^k,
/// columns are four pairwise independent linear forms.
fn linear_oa(size: usize, q: usize) -> Option<Vec<[usize; 4]>> {
    let field = Field::new(q)?;
    let mut k = 0;
    let mut p = 1usize;
    while p < size {
        p = p.checked_mul(q)?;
        k += 1;
    }
    if p != size || k < 2 {
        return None;
    }
    // Normalized (leading nonzero = 1) vectors: unit vectors first, then the rest.
    let mut forms: Vec<Vec<usize>> = (0..k).map(|i| (0..k).map(|j| usize::from(i == j)).collect()).collect();
    let mut v = vec![0usize; k];
    'outer: loop {
        let lead = v.iter().position(|x| *x != 0);
        if lead.is_some_and(|l| v[l] == 1) && !forms.contains(&v) {
            forms.push(v.clone());
        }
        // Increment in mixed radix q, least significant last.
        for d in (0..k).rev() {
            v[d] += 1;
            if v[d] < q {
                continue 'outer;
            }
            v[d] = 0;
        }
        break;
    }
    if forms.len() < 4 {
        return None;
    }
    forms.truncate(4);
    let mut rows = Vec::with_capacity(size);
    for r in 0..size {
        let mut x = vec![0usize; k];
        let mut rem = r;
        for d in (0..k).rev() {
            x[d] = rem % q;
            rem /= q;
        }
        let row: [usize; 4] = std::array::from_fn(|c| {
            forms[c]
                .iter()
                .zip(&x)
                .fold(0, |acc, (a, b)| field.add(acc, field.mul(*a, *b)))
        });
        rows.push(row);
    }
    Some(rows)
}

fn min_pairwise_distance(points: &[[f64; 4]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Swaps single column entries between rows until all rows differ; column
/// level counts are unchanged.
fn repair_duplicates(rows: &mut [[usize; 4]], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for _ in 0..100 * rows.len() {
        let mut seen = std::collections::HashMap::new();
        let dup = rows.iter().enumerate().find_map(|(i, r)| seen.insert(*r, i).map(|_| i));
        let Some(i) = dup else { return };
        let j = rng.gen_range(0..rows.len());
        let v = rng.gen_range(0..4);
        let tmp = rows[i][v];
        rows[i][v] = rows[j][v];
        rows[j][v] = tmp;
    }
}

/// Balanced level columns, shuffled; keeps the candidate with the largest
/// minimum pairwise distance.
fn maximin_balanced(size: usize, levels: usize, seed: u64, candidates: usize) -> Vec<[usize; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<usize> = (0..size).map(|i| i % levels).collect();
    let scale = if levels > 1 { (levels - 1) as f64 } else { 1.0 };
    let mut best: Option<(f64, Vec<[usize; 4]>)> = None;
    for _ in 0..candidates {
        let cols: [Vec<usize>; 4] = std::array::from_fn(|_| {
            let mut c = base.clone();
            c.shuffle(&mut rng);
            c
        });
        let mut rows: Vec<[usize; 4]> = (0..size).map(|i| std::array::from_fn(|v| cols[v][i])).collect();
        repair_duplicates(&mut rows, &mut rng);
        let pts: Vec<[f64; 4]> = rows.iter().map(|r| r.map(|l| l as f64 / scale)).collect();
        let d = min_pairwise_distance(&pts);
        if best.as_ref().is_none_or(|(b, _)| d > *b) {
            best = Some((d, rows));
        }
    }
    best.expect("at least one candidate").1
}

/// Reduced design of `size` tasks with `levels_per_var` levels on every
/// variable. Uses a linear orthogonal array when `size` is a power (≥ 2) of a
/// supported field order equal to the level count, otherwise the balanced
/// maximin fallback.
pub fn orthogonal_design(r: &PhysicalRanges, size: usize, levels_per_var: usize, seed: u64) -> Result<TaskDesign> {
    r.validate()?;
    if levels_per_var == 0 || size < levels_per_var {
        return Err(Error::validation(format!(
            "design of {size} tasks cannot hold {levels_per_var} levels per variable"
        )));
    }
    let max_distinct = levels_per_var.checked_pow(4).unwrap_or(usize::MAX);
    if size > max_distinct {
        return Err(Error::validation(format!(
            "{size} distinct tasks do not fit on a {levels_per_var}-level grid"
        )));
    }
    let specs = level_specs(r, [levels_per_var; 4]);
    let (kind, rows) = match linear_oa(size, levels_per_var) {
        Some(rows) => (DesignKind::OrthogonalArray, rows),
        None => (DesignKind::OaApproximate, maximin_balanced(size, levels_per_var, seed, 400)),
    };
    let tasks = from_indices(&specs, &rows);
    let mut seen = std::collections::HashSet::new();
    if !rows.iter().all(|r| seen.insert(*r)) {
        return Err(Error::Numerical(format!(
            "could not place {size} distinct tasks on a {levels_per_var}-level grid"
        )));
    }
    Ok(TaskDesign {
        name: format!("L{size}"),
        kind,
        tasks,
        level_spec: specs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// Per variable: distinct value (as printed) → occurrence count.
    pub occupancy: Vec<BTreeMap<String, usize>>,
    pub balanced: bool,
    pub min_pairwise_distance: f64,
    pub has_duplicates: bool,
    pub out_of_box: usize,
    /// Fraction of the `cells⁴` equal cells of the normalized box holding a task.
    pub coverage: f64,
    pub cells_per_axis: usize,
}

/// Level occupancy, spacing and coverage of a design.
pub fn validate_design(d: &TaskDesign, r: &PhysicalRanges) -> BalanceReport {
    let mut occupancy = vec![BTreeMap::new(); 4];
    for t in &d.tasks {
        for (v, x) in t.to_array().iter().enumerate() {
            *occupancy[v].entry(format!("{x}")).or_insert(0) += 1;
        }
    }
    let balanced = occupancy.iter().all(|occ: &BTreeMap<String, usize>| {
        let (lo, hi) = occ.values().fold((usize::MAX, 0), |(a, b), c| (a.min(*c), b.max(*c)));
        occ.is_empty() || lo == hi
    });
    let pts: Vec<[f64; 4]> = d.tasks.iter().map(|t| normalize_unchecked(t, r)).collect();
    let min_d = min_pairwise_distance(&pts);
    let out_of_box = d.tasks.iter().filter(|t| !r.contains(t)).count();
    let cells = ((d.tasks.len() as f64).powf(0.25).round() as usize).max(2);
    let occupied: std::collections::HashSet<[usize; 4]> = pts
        .iter()
        .map(|p| p.map(|u| ((u.clamp(0.0, 1.0) * cells as f64) as usize).min(cells - 1)))
        .collect();
    BalanceReport {
        occupancy,
        balanced,
        min_pairwise_distance: if d.tasks.len() < 2 { f64::INFINITY } else { min_d },
        has_duplicates: d.tasks.len() >= 2 && min_d == 0.0,
        out_of_box,
        coverage: occupied.len() as f64 / cells.pow(4) as f64,
        cells_per_axis: cells,
    }
}

pub fn read_task_table<R: Read>(input: R, source: &str) -> Result<Vec<OperatingCondition>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            path: source.into(),
            line,
            message: e.to_string(),
        })?;
        if i == 0 {
            if rec.iter().ne(TASK_TABLE_HEADER.iter().copied()) {
                return Err(Error::Parse {
                    path: source.into(),
                    line,
                    message: format!("expected header {}", TASK_TABLE_HEADER.join(",")),
                });
            }
            continue;
        }
        if rec.len() != 5 {
            return Err(Error::Parse {
                path: source.into(),
                line,
                message: format!("expected 5 fields, found {}", rec.len()),
            });
        }
        let mut v = [0.0; 4];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 1].parse().map_err(|_| Error::Parse {
                path: source.into(),
                line,
                message: format!("not a number: {:?}", &rec[k + 1]),
            })?;
        }
        let c = OperatingCondition::from_array(v);
        c.validate().map_err(|e| Error::Parse {
            path: source.into(),
            line,
            message: e.to_string(),
        })?;
        out.push(c);
    }
    Ok(out)
}

pub fn load_task_table(path: &Path) -> Result<Vec<OperatingCondition>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_task_table(f, &path.display().to_string())
}

pub fn write_task_table<W: Write>(tasks: &[OperatingCondition], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(TASK_TABLE_HEADER).map_err(io)?;
    for (i, t) in tasks.iter().enumerate() {
        let a = t.to_array();
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(a.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<design>", e))
}

pub fn save_task_table(tasks: &[OperatingCondition], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_task_table(tasks, std::io::BufWriter::new(f))
}

/// The 19 bundled validation tasks.
pub fn validation_tasks() -> Vec<OperatingCondition> {
    read_task_table(VALIDATION_CSV.as_bytes(), "validation_tasks.csv").expect("bundled table parses")
}

/// The 19 bundled test tasks.
pub fn test_tasks() -> Vec<OperatingCondition> {
    read_task_table(TEST_CSV.as_bytes(), "test_tasks.csv").expect("bundled table parses")
}
