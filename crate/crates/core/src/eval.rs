//! Recovery metrics for planted factorizations: Hungarian one-to-one matching
//! of outer products, per-class micro F-measure, alteration recall, and
//! class-wise effective ranks.
//!
//! Planted and computed factorizations are zero-padded to a common rank before
//! matching. All scores are mass ratios of outer-product overlaps, computed at
//! `f64` precision.

use ndarray::Array2;

use crate::binmat::BinaryMatrix;
use crate::csalt::FactorModel;
use crate::synthgen::GroundTruth;
use crate::Result;

/// A one-to-one matching from planted columns to computed columns.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// `assignment[s]` is the computed column matched to planted column `s`.
    pub assignment: Vec<usize>,
    /// Total matched score.
    pub score: f64,
}

/// Whether the usage matching is computed separately per class or shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchScope {
    PerClass,
    SharedAcrossClasses,
}

/// Full recovery report.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub f_class: Vec<f64>,
    pub f_avg: f64,
    pub rec_v_class: Vec<f64>,
    pub rec_v_avg: f64,
    pub rank_class: Vec<usize>,
    pub rank_avg: f64,
    pub rss: usize,
}

/// Sorted-column image of one side of a factorization, padded to rank `r`:
/// per class, the usage rows and the effective pattern items of every column.
struct ClassColumns {
    usage: Vec<Vec<Vec<u32>>>,   // [class][column] -> rows
    pattern: Vec<Vec<Vec<u32>>>, // [class][column] -> items
}

impl ClassColumns {
    fn from_factors(
        x: &BinaryMatrix,
        v: &[BinaryMatrix],
        y: &BinaryMatrix,
        partition: &crate::binmat::ClassPartition,
        rank: usize,
    ) -> Result<Self> {
        let pad = rank - x.cols();
        let c = v.len();
        let mut usage = Vec::with_capacity(c);
        let mut pattern = Vec::with_capacity(c);
        for a in 0..c {
            let y_a = y.class_block(partition, a)?.pad_columns(pad);
            usage.push(y_a.columns());
            let effective = x.union(&v[a])?.pad_columns(pad);
            pattern.push(effective.columns());
        }
        Ok(Self { usage, pattern })
    }

    fn mass(&self, class: usize, col: usize) -> f64 {
        (self.usage[class][col].len() * self.pattern[class][col].len()) as f64
    }
}

fn overlap(a: &ClassColumns, b: &ClassColumns, class: usize, s: usize, t: usize) -> f64 {
    let rows = intersection_size(&a.usage[class][s], &b.usage[class][t]);
    let items = intersection_size(&a.pattern[class][s], &b.pattern[class][t]);
    (rows * items) as f64
}

fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut ia, mut ib, mut count) = (0, 0, 0);
    while ia < a.len() && ib < b.len() {
        match a[ia].cmp(&b[ib]) {
            std::cmp::Ordering::Less => ia += 1,
            std::cmp::Ordering::Greater => ib += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                ia += 1;
                ib += 1;
            }
        }
    }
    count
}

fn padded_rank(truth: &GroundTruth, model: &FactorModel) -> usize {
    truth.rank().max(model.rank()).max(1)
}

fn truth_columns(truth: &GroundTruth, rank: usize) -> Result<ClassColumns> {
    ClassColumns::from_factors(&truth.x, &truth.v, &truth.y, &truth.partition, rank)
}

fn model_columns(model: &FactorModel, rank: usize) -> Result<ClassColumns> {
    ClassColumns::from_factors(
        model.x(),
        model.v_blocks(),
        model.y(),
        model.partition(),
        rank,
    )
}

/// Pairwise F-measures `F^(a)_{s,t}` between planted columns `s` and computed
/// columns `t` within class `a`, on the zero-padded common rank. Pairs with an
/// empty planted or computed product score zero.
pub fn pair_scores(truth: &GroundTruth, model: &FactorModel, class: usize) -> Result<Array2<f64>> {
    let rank = padded_rank(truth, model);
    let planted = truth_columns(truth, rank)?;
    let computed = model_columns(model, rank)?;
    Ok(pair_scores_with(&planted, &computed, class, rank))
}

fn pair_scores_with(
    planted: &ClassColumns,
    computed: &ClassColumns,
    class: usize,
    rank: usize,
) -> Array2<f64> {
    Array2::from_shape_fn((rank, rank), |(s, t)| {
        let num = overlap(planted, computed, class, s, t);
        let pre_den = computed.mass(class, t);
        let rec_den = planted.mass(class, s);
        let pre = if pre_den > 0.0 { num / pre_den } else { 0.0 };
        let rec = if rec_den > 0.0 { num / rec_den } else { 0.0 };
        f_measure(pre, rec)
    })
}

fn f_measure(pre: f64, rec: f64) -> f64 {
    if pre + rec > 0.0 {
        2.0 * pre * rec / (pre + rec)
    } else {
        0.0
    }
}

/// Maximum-score one-to-one assignment of rows to columns. The matrix may be
/// rectangular with at least as many columns as rows. Ties resolve to the
/// lexicographically smallest assignment.
pub fn hungarian(scores: &Array2<f64>) -> MatchResult {
    let assignment = assign_min_cost(&scores.mapv(|x| -x));
    let score = assignment
        .iter()
        .enumerate()
        .map(|(s, &t)| scores[(s, t)])
        .sum();
    MatchResult { assignment, score }
}

/// Shortest-augmenting-path assignment on an `n x m` cost matrix, `n <= m`,
/// minimizing total cost. Returns the column matched to each row.
fn assign_min_cost(cost: &Array2<f64>) -> Vec<usize> {
    let (n, m) = cost.dim();
    assert!(n <= m, "assignment needs rows <= cols (pad first)");
    // Potentials u, v and matching p over 1-based columns; p[0] hosts the row
    // currently being augmented.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Per-class micro F-measure under the Hungarian matching, and its unweighted
/// class average. With [`MatchScope::SharedAcrossClasses`] one matching is
/// computed on the class-summed score matrix and reused for every class.
pub fn micro_f(
    truth: &GroundTruth,
    model: &FactorModel,
    scope: MatchScope,
) -> Result<(Vec<f64>, f64)> {
    let rank = padded_rank(truth, model);
    let c = truth.partition.class_count();
    let planted = truth_columns(truth, rank)?;
    let computed = model_columns(model, rank)?;
    let scores: Vec<Array2<f64>> = (0..c)
        .map(|a| pair_scores_with(&planted, &computed, a, rank))
        .collect();
    let shared = match scope {
        MatchScope::SharedAcrossClasses => {
            let mut total = Array2::zeros((rank, rank));
            for s in &scores {
                total += s;
            }
            Some(hungarian(&total).assignment)
        }
        MatchScope::PerClass => None,
    };
    let mut per_class = Vec::with_capacity(c);
    for a in 0..c {
        let assignment = match &shared {
            Some(sigma) => sigma.clone(),
            None => hungarian(&scores[a]).assignment,
        };
        let mut num = 0.0;
        for (s, &t) in assignment.iter().enumerate() {
            num += overlap(&planted, &computed, a, s, t);
        }
        let pre_den: f64 = (0..rank).map(|t| computed.mass(a, t)).sum();
        let rec_den: f64 = (0..rank).map(|s| planted.mass(a, s)).sum();
        let pre = if pre_den > 0.0 { num / pre_den } else { 0.0 };
        let rec = if rec_den > 0.0 { num / rec_den } else { 0.0 };
        per_class.push(f_measure(pre, rec));
    }
    let avg = mean(&per_class);
    Ok((per_class, avg))
}

/// Recall of the planted alterations: planted `(V^(a)*, Y^(a)*)` columns are
/// matched against the widened computed patterns `X_V = [X V^(0) .. V^(c-1)]`
/// with usage replicated per group, maximizing summed pairwise recall. A class
/// without planted alteration mass scores one.
pub fn recall_v(truth: &GroundTruth, model: &FactorModel) -> Result<(Vec<f64>, f64)> {
    let rank = padded_rank(truth, model);
    let c = truth.partition.class_count();
    let groups = model.class_count() + 1;

    // Computed side: per class, usage and pattern columns of X_V / Y_V.
    let pad = rank - model.rank();
    let mut computed_usage: Vec<Vec<Vec<u32>>> = Vec::with_capacity(c);
    let mut computed_pattern: Vec<Vec<u32>> = Vec::with_capacity(groups * rank);
    for a in 0..c {
        let y_a = model.y().class_block(model.partition(), a)?.pad_columns(pad);
        computed_usage.push(y_a.columns());
    }
    let x_cols = model.x().pad_columns(pad).columns();
    computed_pattern.extend(x_cols);
    for b in 0..model.class_count() {
        computed_pattern.extend(model.v(b).pad_columns(pad).columns());
    }

    // Planted side: alteration columns with their class usage.
    let truth_pad = rank - truth.rank();
    let mut per_class = Vec::with_capacity(c);
    for a in 0..c {
        let v_a = truth.v[a].pad_columns(truth_pad).columns();
        let y_a = truth
            .y
            .class_block(&truth.partition, a)?
            .pad_columns(truth_pad)
            .columns();
        let masses: Vec<f64> = (0..rank)
            .map(|s| (v_a[s].len() * y_a[s].len()) as f64)
            .collect();
        let total_mass: f64 = masses.iter().sum();
        if total_mass == 0.0 {
            per_class.push(1.0);
            continue;
        }
        let scores = Array2::from_shape_fn((rank, groups * rank), |(s, t)| {
            if masses[s] == 0.0 {
                return 0.0;
            }
            let rows = intersection_size(&y_a[s], &computed_usage[a][t % rank]);
            let items = intersection_size(&v_a[s], &computed_pattern[t]);
            (rows * items) as f64 / masses[s]
        });
        let matching = hungarian(&scores);
        let num: f64 = matching
            .assignment
            .iter()
            .enumerate()
            .map(|(s, &t)| {
                let rows = intersection_size(&y_a[s], &computed_usage[a][t % rank]);
                let items = intersection_size(&v_a[s], &computed_pattern[t]);
                (rows * items) as f64
            })
            .sum();
        per_class.push(num / total_mass);
    }
    let avg = mean(&per_class);
    Ok((per_class, avg))
}

/// Class-wise effective ranks (nontrivial outer products per class) and their
/// unweighted average.
pub fn effective_ranks(model: &FactorModel) -> Result<(Vec<usize>, f64)> {
    let ranks = model.class_ranks()?;
    let avg = ranks.iter().map(|&r| r as f64).sum::<f64>() / ranks.len() as f64;
    Ok((ranks, avg))
}

/// Full recovery report of a computed model against a planted instance.
pub fn evaluate(truth: &GroundTruth, model: &FactorModel) -> Result<EvalReport> {
    let (f_class, f_avg) = micro_f(truth, model, MatchScope::PerClass)?;
    let (rec_v_class, rec_v_avg) = recall_v(truth, model)?;
    let (rank_class, rank_avg) = effective_ranks(model)?;
    let rss = model.boolean_rss(&truth.data)?;
    Ok(EvalReport {
        f_class,
        f_avg,
        rec_v_class,
        rec_v_avg,
        rank_class,
        rank_avg,
        rss,
    })
}

impl EvalReport {
    /// Stable `key=value` serialization (one line per key).
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("F_avg={}\n", format_score(self.f_avg)));
        for (a, f) in self.f_class.iter().enumerate() {
            out.push_str(&format!("F_class_{a}={}\n", format_score(*f)));
        }
        out.push_str(&format!("recV_avg={}\n", format_score(self.rec_v_avg)));
        for (a, r) in self.rec_v_class.iter().enumerate() {
            out.push_str(&format!("recV_class_{a}={}\n", format_score(*r)));
        }
        out.push_str(&format!("r_avg={}\n", format_score(self.rank_avg)));
        for (a, r) in self.rank_class.iter().enumerate() {
            out.push_str(&format!("r_class_{a}={r}\n"));
        }
        out.push_str(&format!("RSS={}\n", self.rss));
        out
    }
}

fn format_score(x: f64) -> String {
    // Full round-trip precision so CLI output matches in-process values.
    let mut s = format!("{x}");
    if !s.contains('.') && !s.contains('e') && x.is_finite() {
        s.push_str(".0");
    }
    s
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
