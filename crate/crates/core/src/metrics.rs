//! Confusion matrices and the precision/recall/F1 classification report.
//!
//! Besides the forward direction (pairs -> matrix -> report) this module
//! solves the inverse problem: given a report rounded to two decimals,
//! recover every integer diagonal and column-sum assignment consistent with
//! it, and complete one canonical matrix.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Read;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ObjectClass;
use crate::scalar::{format_hundredths, Scalar};

/// Confusion counts recovered from the published classification report
/// (rows = truth, columns = prediction, both in [`ObjectClass::ALL`] order).
/// Diagonal and margins are forced by the rounded report; the off-diagonal
/// cells are the canonical completion produced by [`reconstruct_matrix`].
pub const REFERENCE_COUNTS: [[u64; 5]; 5] = [
    [13, 2, 0, 0, 0],
    [2, 14, 1, 0, 0],
    [0, 1, 14, 0, 0],
    [0, 1, 2, 52, 2],
    [0, 0, 0, 2, 13],
];

/// Cap on enumerated solutions when the rounded report under-determines the matrix.
pub const MAX_SOLUTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("UNKNOWN_CLASS: {0:?}")]
    UnknownClass(String),
    #[error("EMPTY_MATRIX: report needs at least one counted instance")]
    EmptyMatrix,
    #[error("INVALID_MATRIX: {0}")]
    InvalidMatrix(String),
    #[error("BAD_INPUT: {0}")]
    BadInput(String),
    #[error("INFEASIBLE: {0}")]
    Infeasible(String),
    #[error("AMBIGUOUS: {} diagonal/margin solutions", .0.len())]
    Ambiguous(Vec<Reconstruction>),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::UnknownClass(_) => "UNKNOWN_CLASS",
            MetricsError::EmptyMatrix => "EMPTY_MATRIX",
            MetricsError::InvalidMatrix(_) => "INVALID_MATRIX",
            MetricsError::BadInput(_) => "BAD_INPUT",
            MetricsError::Infeasible(_) => "INFEASIBLE",
            MetricsError::Ambiguous(_) => "AMBIGUOUS",
        }
    }
}

/// `counts[i][j]` = instances of true class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let m = ConfusionMatrix { classes, counts };
        m.validate()?;
        Ok(m)
    }

    pub fn zeros(classes: Vec<String>) -> Self {
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    /// The reference X-ray matrix labelled with the object class names.
    pub fn reference() -> Self {
        ConfusionMatrix {
            classes: ObjectClass::ALL.iter().map(|c| c.name().to_string()).collect(),
            counts: REFERENCE_COUNTS.iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let n = self.classes.len();
        if self.counts.len() != n || self.counts.iter().any(|r| r.len() != n) {
            return Err(MetricsError::InvalidMatrix(format!("counts must be {n}x{n}")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.classes.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(MetricsError::InvalidMatrix(format!("duplicate class name {dup:?}")));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> Vec<u64> {
        (0..self.n_classes()).map(|i| self.counts[i][i]).collect()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.n_classes())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    fn index_of(&self, name: &str) -> Result<usize, MetricsError> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| MetricsError::UnknownClass(name.to_string()))
    }

    /// Expands the counts back into `(truth, predicted)` pairs, row-major.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = Vec::with_capacity(self.total() as usize);
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    pairs.push((self.classes[i].clone(), self.classes[j].clone()));
                }
            }
        }
        pairs
    }
}

pub fn from_pairs<I, A, B>(pairs: I, classes: &[String]) -> Result<ConfusionMatrix, MetricsError>
where
    I: IntoIterator<Item = (A, B)>,
    A: AsRef<str>,
    B: AsRef<str>,
{
    let mut m = ConfusionMatrix::new(classes.to_vec(), vec![vec![0; classes.len()]; classes.len()])?;
    for (truth, pred) in pairs {
        let i = m.index_of(truth.as_ref())?;
        let j = m.index_of(pred.as_ref())?;
        m.counts[i][j] += 1;
    }
    Ok(m)
}

/// Class order for a pair list: the object classes when every name is one of
/// them, otherwise order of first appearance.
pub fn infer_classes<A: AsRef<str>, B: AsRef<str>>(pairs: &[(A, B)]) -> Vec<String> {
    let names = pairs.iter().flat_map(|(a, b)| [a.as_ref(), b.as_ref()]);
    if names.clone().all(|n| ObjectClass::from_name(n).is_some()) {
        return ObjectClass::ALL.iter().map(|c| c.name().to_string()).collect();
    }
    let mut seen = HashSet::new();
    names.filter(|n| seen.insert(*n)).map(str::to_string).collect()
}

/// Reads a `truth,predicted` CSV.
pub fn read_pairs_csv<R: Read>(reader: R) -> Result<Vec<(String, String)>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MetricsError::BadInput(e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "truth" || &headers[1] != "predicted" {
        return Err(MetricsError::BadInput(format!(
            "expected header `truth,predicted`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| MetricsError::BadInput(e.to_string()))?;
            Ok((rec[0].to_string(), rec[1].to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    pub class: String,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport<T> {
    pub classes: Vec<ClassMetrics<T>>,
    pub accuracy: T,
    pub macro_avg: Averages<T>,
    pub weighted_avg: Averages<T>,
    pub total_support: u64,
}

fn rate<T: Scalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::ratio(num, den)
    }
}

pub fn classification_report<T: Scalar>(m: &ConfusionMatrix) -> Result<ClassReport<T>, MetricsError> {
    m.validate()?;
    let total = m.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let diag = m.diagonal();
    let rows = m.row_sums();
    let cols = m.col_sums();

    let classes: Vec<ClassMetrics<T>> = (0..m.n_classes())
        .map(|i| {
            let precision: T = rate(diag[i], cols[i]);
            let recall: T = rate(diag[i], rows[i]);
            let sum = precision + recall;
            let f1 = if sum == T::zero() {
                T::zero()
            } else {
                T::from_count(2) * precision * recall / sum
            };
            ClassMetrics {
                class: m.classes[i].clone(),
                precision,
                recall,
                f1,
                support: rows[i],
            }
        })
        .collect();

    let n = T::from_count(classes.len() as u64);
    let mean = |f: fn(&ClassMetrics<T>) -> T| classes.iter().fold(T::zero(), |a, c| a + f(c)) / n;
    let weighted = |f: fn(&ClassMetrics<T>) -> T| {
        classes
            .iter()
            .fold(T::zero(), |a, c| a + f(c) * T::from_count(c.support))
            / T::from_count(total)
    };
    let macro_avg = Averages {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
    };
    let weighted_avg = Averages {
        precision: weighted(|c| c.precision),
        recall: weighted(|c| c.recall),
        f1: weighted(|c| c.f1),
    };

    Ok(ClassReport {
        classes,
        accuracy: T::ratio(diag.iter().sum(), total),
        macro_avg,
        weighted_avg,
        total_support: total,
    })
}

impl<T: Scalar> ClassReport<T> {
    /// The report with every rate rounded to two decimals, as `f64`.
    pub fn rounded(&self) -> ClassReport<f64> {
        let r = |v: T| v.hundredths() as f64 / 100.0;
        let avg = |a: &Averages<T>| Averages {
            precision: r(a.precision),
            recall: r(a.recall),
            f1: r(a.f1),
        };
        ClassReport {
            classes: self
                .classes
                .iter()
                .map(|c| ClassMetrics {
                    class: c.class.clone(),
                    precision: r(c.precision),
                    recall: r(c.recall),
                    f1: r(c.f1),
                    support: c.support,
                })
                .collect(),
            accuracy: r(self.accuracy),
            macro_avg: avg(&self.macro_avg),
            weighted_avg: avg(&self.weighted_avg),
            total_support: self.total_support,
        }
    }
}

/// Fixed-width text table: class rows, then accuracy, macro avg and weighted avg.
pub fn render_report<T: Scalar>(r: &ClassReport<T>) -> String {
    let width = r
        .classes
        .iter()
        .map(|c| c.class.chars().count())
        .chain(["weighted avg".len()])
        .max()
        .unwrap_or(0);
    let cell = |v: T| format_hundredths(v.hundredths());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>width$} {:>9} {:>9} {:>9} {:>9}",
        "", "precision", "recall", "f1-score", "support"
    );
    out.push('\n');
    for c in &r.classes {
        let _ = writeln!(
            out,
            "{:>width$} {:>9} {:>9} {:>9} {:>9}",
            c.class,
            cell(c.precision),
            cell(c.recall),
            cell(c.f1),
            c.support
        );
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "{:>width$} {:>9} {:>9} {:>9} {:>9}",
        "accuracy",
        "",
        "",
        cell(r.accuracy),
        r.total_support
    );
    for (name, a) in [("macro avg", &r.macro_avg), ("weighted avg", &r.weighted_avg)] {
        let _ = writeln!(
            out,
            "{:>width$} {:>9} {:>9} {:>9} {:>9}",
            name,
            cell(a.precision),
            cell(a.recall),
            cell(a.f1),
            r.total_support
        );
    }
    out
}

/// One class row of a published report: rates in hundredths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundedClass {
    pub class: String,
    pub precision: i64,
    pub recall: i64,
    pub support: u64,
}

/// The inputs the inverse problem uses: rounded per-class precision,
/// recall and support, and rounded accuracy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundedReport {
    pub classes: Vec<RoundedClass>,
    pub accuracy: i64,
}

#[derive(Deserialize)]
struct ReportRowInput {
    class: String,
    precision: f64,
    recall: f64,
    support: u64,
}

#[derive(Deserialize)]
struct ReportInput {
    classes: Vec<ReportRowInput>,
    accuracy: f64,
}

fn to_hundredths(field: &str, v: f64) -> Result<i64, MetricsError> {
    let h = (v * 100.0).round();
    if !(0.0..=1.0).contains(&v) || (v * 100.0 - h).abs() > 1e-6 {
        return Err(MetricsError::BadInput(format!(
            "{field} = {v} is not a two-decimal rate in [0,1]"
        )));
    }
    Ok(h as i64)
}

impl RoundedReport {
    /// Parses the classification-report JSON schema; extra fields such as
    /// `f1` or the averages are ignored.
    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        let input: ReportInput = serde_json::from_str(text).map_err(|e| MetricsError::BadInput(e.to_string()))?;
        let classes = input
            .classes
            .into_iter()
            .map(|row| {
                Ok(RoundedClass {
                    precision: to_hundredths(&format!("{}.precision", row.class), row.precision)?,
                    recall: to_hundredths(&format!("{}.recall", row.class), row.recall)?,
                    support: row.support,
                    class: row.class,
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()?;
        Ok(RoundedReport {
            classes,
            accuracy: to_hundredths("accuracy", input.accuracy)?,
        })
    }

    pub fn from_report<T: Scalar>(r: &ClassReport<T>) -> Self {
        RoundedReport {
            classes: r
                .classes
                .iter()
                .map(|c| RoundedClass {
                    class: c.class.clone(),
                    precision: c.precision.hundredths(),
                    recall: c.recall.hundredths(),
                    support: c.support,
                })
                .collect(),
            accuracy: r.accuracy.hundredths(),
        }
    }

    pub fn total_support(&self) -> u64 {
        self.classes.iter().map(|c| c.support).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub diagonal: Vec<u64>,
    pub column_sums: Vec<u64>,
    pub matrix: ConfusionMatrix,
}

type Q = Ratio<i64>;

fn ceil_q(q: Q) -> i64 {
    q.ceil().to_integer()
}

fn floor_q(q: Q) -> i64 {
    q.floor().to_integer()
}

/// True-positive counts whose recall `tp / support` rounds to `h` hundredths:
/// `tp in [(h - 0.5) s / 100, (h + 0.5) s / 100)`.
fn tp_candidates(h: i64, support: u64) -> Vec<u64> {
    let s = support as i64;
    if s == 0 {
        return if h == 0 { vec![0] } else { vec![] };
    }
    let lo = ceil_q(Q::new((2 * h - 1) * s, 200)).max(0);
    let hi = (ceil_q(Q::new((2 * h + 1) * s, 200)) - 1).min(s);
    (lo..=hi)
        .map(|tp| tp as u64)
        .filter(|&tp| rate::<Q>(tp, support).hundredths() == h)
        .collect()
}

/// Predicted-as-class totals whose precision `tp / colsum` rounds to `h`:
/// `colsum in (100 tp / (h + 0.5), 100 tp / (h - 0.5)]`, clipped to `[tp, total]`.
fn colsum_candidates(h: i64, tp: u64, total: u64) -> Vec<u64> {
    if tp == 0 {
        return if h == 0 { (0..=total).collect() } else { vec![] };
    }
    let t = tp as i64;
    let lo = (floor_q(Q::new(200 * t, 2 * h + 1)) + 1).max(t);
    let hi = if h == 0 {
        total as i64
    } else {
        floor_q(Q::new(200 * t, 2 * h - 1)).min(total as i64)
    };
    (lo..=hi)
        .map(|c| c as u64)
        .filter(|&c| rate::<Q>(tp, c).hundredths() == h)
        .collect()
}

/// Completes a matrix with the given diagonal and margins. Off-diagonal mass
/// is placed in north-west-corner order skipping the diagonal; if residual
/// is left only on a diagonal cell `k`, units are swapped out of some cell
/// `(i, j)` with `i, j != k` into `(i, k)` and `(k, j)`.
pub fn fill_off_diagonal(diagonal: &[u64], row_sums: &[u64], col_sums: &[u64]) -> Option<Vec<Vec<u64>>> {
    let n = diagonal.len();
    let mut rows: Vec<u64> = row_sums
        .iter()
        .zip(diagonal)
        .map(|(r, d)| r.checked_sub(*d))
        .collect::<Option<_>>()?;
    let mut cols: Vec<u64> = col_sums
        .iter()
        .zip(diagonal)
        .map(|(c, d)| c.checked_sub(*d))
        .collect::<Option<_>>()?;
    if rows.iter().sum::<u64>() != cols.iter().sum::<u64>() {
        return None;
    }
    let mut counts: Vec<Vec<u64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { diagonal[i] } else { 0 }).collect())
        .collect();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let x = rows[i].min(cols[j]);
            counts[i][j] += x;
            rows[i] -= x;
            cols[j] -= x;
        }
    }
    for k in 0..n {
        while rows[k] > 0 {
            if cols[k] != rows[k] {
                return None;
            }
            let (i, j) = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .find(|&(i, j)| i != j && i != k && j != k && counts[i][j] > 0)?;
            counts[i][j] -= 1;
            counts[i][k] += 1;
            counts[k][j] += 1;
            rows[k] -= 1;
            cols[k] -= 1;
        }
    }
    Some(counts)
}

/// Recovers every integer diagonal / column-sum assignment that re-rounds to
/// the given report, and completes the matrix canonically.
///
/// Returns the unique solution, [`MetricsError::Ambiguous`] with all
/// solutions (up to [`MAX_SOLUTIONS`]), or [`MetricsError::Infeasible`].
pub fn reconstruct_matrix(report: &RoundedReport) -> Result<Reconstruction, MetricsError> {
    let solutions = reconstruct_all(report)?;
    match solutions.len() {
        0 => Err(MetricsError::Infeasible(
            "no integer diagonal and column sums reproduce the report".into(),
        )),
        1 => Ok(solutions.into_iter().next().unwrap()),
        _ => Err(MetricsError::Ambiguous(solutions)),
    }
}

/// Every feasible completion, in lexicographic order of the per-class choices.
pub fn reconstruct_all(report: &RoundedReport) -> Result<Vec<Reconstruction>, MetricsError> {
    let n = report.classes.len();
    if n == 0 {
        return Err(MetricsError::BadInput("report has no classes".into()));
    }
    let names: Vec<String> = report.classes.iter().map(|c| c.class.clone()).collect();
    ConfusionMatrix::zeros(names.clone()).validate()?;
    let total = report.total_support();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let supports: Vec<u64> = report.classes.iter().map(|c| c.support).collect();

    let candidates: Vec<Vec<(u64, u64)>> = report
        .classes
        .iter()
        .map(|c| {
            tp_candidates(c.recall, c.support)
                .into_iter()
                .flat_map(|tp| {
                    colsum_candidates(c.precision, tp, total)
                        .into_iter()
                        .map(move |cs| (tp, cs))
                })
                .collect()
        })
        .collect();

    if let Some(i) = candidates.iter().position(Vec::is_empty) {
        return Err(MetricsError::Infeasible(format!(
            "class {:?}: no integer true-positive/predicted count matches precision {} recall {} support {}",
            names[i],
            format_hundredths(report.classes[i].precision),
            format_hundredths(report.classes[i].recall),
            supports[i]
        )));
    }

    // Bounds on the column-sum total still reachable from class i onwards.
    let mut min_rest = vec![0u64; n + 1];
    let mut max_rest = vec![0u64; n + 1];
    for i in (0..n).rev() {
        min_rest[i] = min_rest[i + 1] + candidates[i].iter().map(|c| c.1).min().unwrap();
        max_rest[i] = max_rest[i + 1] + candidates[i].iter().map(|c| c.1).max().unwrap();
    }

    struct Search<'a> {
        candidates: &'a [Vec<(u64, u64)>],
        min_rest: &'a [u64],
        max_rest: &'a [u64],
        total: u64,
        accuracy: i64,
        supports: &'a [u64],
        names: &'a [String],
        chosen: Vec<(u64, u64)>,
        found: Vec<Reconstruction>,
    }

    impl Search<'_> {
        fn go(&mut self, i: usize, cs_sum: u64) {
            if self.found.len() >= MAX_SOLUTIONS {
                return;
            }
            if i == self.candidates.len() {
                if cs_sum != self.total {
                    return;
                }
                let diagonal: Vec<u64> = self.chosen.iter().map(|c| c.0).collect();
                let column_sums: Vec<u64> = self.chosen.iter().map(|c| c.1).collect();
                if rate::<Q>(diagonal.iter().sum(), self.total).hundredths() != self.accuracy {
                    return;
                }
                if let Some(counts) = fill_off_diagonal(&diagonal, self.supports, &column_sums) {
                    self.found.push(Reconstruction {
                        diagonal,
                        column_sums,
                        matrix: ConfusionMatrix {
                            classes: self.names.to_vec(),
                            counts,
                        },
                    });
                }
                return;
            }
            for k in 0..self.candidates[i].len() {
                let (tp, cs) = self.candidates[i][k];
                let sum = cs_sum + cs;
                if sum + self.min_rest[i + 1] > self.total || sum + self.max_rest[i + 1] < self.total {
                    continue;
                }
                self.chosen.push((tp, cs));
                self.go(i + 1, sum);
                self.chosen.pop();
            }
        }
    }

    let mut search = Search {
        candidates: &candidates,
        min_rest: &min_rest,
        max_rest: &max_rest,
        total,
        accuracy: report.accuracy,
        supports: &supports,
        names: &names,
        chosen: Vec::with_capacity(n),
        found: Vec::new(),
    };
    search.go(0, 0);
    Ok(search.found)
}
