//! Relevance judgments, average precision, paired significance testing and
//! position histograms.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::retrieval::Ranking;

/// Relevance grades keyed by `(query_id, doc_id)`. Grade >= 1 is relevant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: HashMap<(String, String), u32>,
}

impl Qrels {
    pub fn from_judgments(
        judgments: impl IntoIterator<Item = ((String, String), u32)>,
    ) -> Self {
        Qrels {
            judgments: judgments.into_iter().collect(),
        }
    }

    /// Parses `<query_id> <iteration> <doc_id> <grade>` lines. A repeated
    /// `(query, doc)` keeps the last grade; each repeat is reported in the
    /// returned warnings.
    pub fn parse<R: BufRead>(reader: R) -> Result<(Self, Vec<String>)> {
        let mut judgments = HashMap::new();
        let mut warnings = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(n + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    n + 1,
                    format!("expected 4 fields, found {}", fields.len()),
                ));
            }
            let grade: i64 = fields[3]
                .parse()
                .map_err(|_| Error::parse(n + 1, format!("invalid grade {:?}", fields[3])))?;
            // Negative grades (e.g. -1 for "not judged") count as non-relevant.
            let grade = grade.max(0) as u32;
            let key = (fields[0].to_owned(), fields[2].to_owned());
            if judgments.insert(key, grade).is_some() {
                let msg = format!(
                    "line {}: duplicate judgment for ({}, {}); keeping the last one",
                    n + 1,
                    fields[0],
                    fields[2]
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        }
        Ok((Qrels { judgments }, warnings))
    }

    pub fn read(path: &Path) -> Result<(Self, Vec<String>)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(std::io::BufReader::new(file))
    }

    /// Writes judgments sorted by query then document.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut keys: Vec<_> = self.judgments.iter().collect();
        keys.sort();
        for ((q, d), g) in keys {
            writeln!(w, "{q} 0 {d} {g}").map_err(|e| Error::io("<qrels>", e))?;
        }
        Ok(())
    }

    pub fn grade(&self, query: &str, doc: &str) -> Option<u32> {
        self.judgments
            .get(&(query.to_owned(), doc.to_owned()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn queries(&self) -> BTreeSet<&str> {
        self.judgments.keys().map(|(q, _)| q.as_str()).collect()
    }

    /// Documents judged relevant for `query`.
    pub fn relevant(&self, query: &str) -> HashSet<&str> {
        self.judgments
            .iter()
            .filter(|((q, _), &g)| q == query && g >= 1)
            .map(|((_, d), _)| d.as_str())
            .collect()
    }

    fn relevant_by_query(&self) -> HashMap<&str, HashSet<&str>> {
        let mut out: HashMap<&str, HashSet<&str>> = HashMap::new();
        for ((q, d), &g) in &self.judgments {
            if g >= 1 {
                out.entry(q.as_str()).or_default().insert(d.as_str());
            }
        }
        out
    }
}

/// Average precision; `None` when there are no relevant documents.
/// Relevant documents that were not retrieved contribute zero.
pub fn average_precision<S>(ranking: &Ranking, relevant: &HashSet<S>) -> Option<f64>
where
    S: std::borrow::Borrow<str> + Eq + std::hash::Hash,
{
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranking.doc_ids().enumerate() {
        if relevant.contains(doc) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// `(query_id, AP)` in run order, evaluable queries only.
    pub per_query: Vec<(String, f64)>,
    /// Queries without any relevant judgment.
    pub skipped: Vec<String>,
}

impl MapReport {
    pub fn ap_of(&self, query: &str) -> Option<f64> {
        self.per_query
            .iter()
            .find(|(q, _)| q == query)
            .map(|&(_, ap)| ap)
    }
}

/// Mean of per-query AP over the queries that have relevant documents.
pub fn mean_average_precision(runs: &[Ranking], qrels: &Qrels) -> Result<MapReport> {
    let relevant = qrels.relevant_by_query();
    let mut per_query = Vec::new();
    let mut skipped = Vec::new();
    for r in runs {
        match relevant
            .get(r.query_id.as_str())
            .and_then(|rel| average_precision(r, rel))
        {
            Some(ap) => per_query.push((r.query_id.clone(), ap)),
            None => {
                warn!("query {} has no relevant documents; excluded from MAP", r.query_id);
                skipped.push(r.query_id.clone());
            }
        }
    }
    if per_query.is_empty() {
        return Err(Error::NoEvaluableQueries);
    }
    let map = per_query.iter().map(|(_, ap)| ap).sum::<f64>() / per_query.len() as f64;
    Ok(MapReport {
        map,
        per_query,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceReport {
    pub t_statistic: f64,
    pub p_value: f64,
    /// `alpha / m`.
    pub corrected_alpha: f64,
    pub significant: bool,
    pub num_comparisons: usize,
    /// Set when all differences are equal and non-zero, so the standard
    /// deviation vanishes; `p` is then reported as 0.
    pub degenerate: bool,
}

/// Paired two-tailed Student t-test on per-query scores with Bonferroni
/// correction over `m` comparisons.
pub fn paired_ttest(a: &[f64], b: &[f64], m: usize, alpha: f64) -> Result<SignificanceReport> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(
            "a paired t-test needs at least two observations".into(),
        ));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    let corrected_alpha = alpha / m as f64;

    let (t, p, degenerate) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0, false)
        } else {
            (f64::INFINITY.copysign(mean), 0.0, true)
        }
    } else {
        let t = mean / (var.sqrt() / n.sqrt());
        (t, student_t_two_tailed(t, n - 1.0), false)
    };
    Ok(SignificanceReport {
        t_statistic: t,
        p_value: p,
        corrected_alpha,
        significant: p <= corrected_alpha,
        num_comparisons: m,
        degenerate,
    })
}

/// Two-tailed p-value `P(|T| >= |t|)` for Student's t with `df` degrees of
/// freedom: `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms) of `ln Γ(x)` for `x > 0`.
#[allow(clippy::excessive_precision)]
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Number of histogram bins: positions 1..=10 and one overflow bin.
pub const POSITION_BINS: usize = 11;

/// Proportions of part positions pooled over all queries; bin `i < 10`
/// holds position `i + 1`, bin 10 holds positions above 10.
pub fn position_histogram(per_query_positions: &[Vec<usize>]) -> Result<[f64; POSITION_BINS]> {
    let mut counts = [0usize; POSITION_BINS];
    let mut total = 0usize;
    for &p in per_query_positions.iter().flatten() {
        if p == 0 {
            return Err(Error::InvalidArgument("positions are 1-based".into()));
        }
        counts[(p - 1).min(POSITION_BINS - 1)] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Empty("no part positions"));
    }
    Ok(counts.map(|c| c as f64 / total as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(ids: &[&str]) -> Ranking {
        let n = ids.len();
        Ranking::from_scores(
            "q",
            ids.iter()
                .enumerate()
                .map(|(i, d)| (d.to_string(), (n - i) as f64)),
        )
        .unwrap()
    }

    fn set(ids: &[&'static str]) -> HashSet<&'static str> {
        ids.iter().copied().collect()
    }

    #[test]
    fn qrels_examples() {
        let (q, w) = Qrels::parse("q1 0 d1 1\n".as_bytes()).unwrap();
        assert_eq!(q.grade("q1", "d1"), Some(1));
        assert!(w.is_empty());

        let (q, w) = Qrels::parse("q1 0 d1 0\n\nq1 0 d1 1\n".as_bytes()).unwrap();
        assert_eq!(q.grade("q1", "d1"), Some(1));
        assert_eq!(w.len(), 1);
        assert!(w[0].starts_with("line 3"));

        let err = Qrels::parse("q1 d1 1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 1"));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&ranking(&["d1", "d2"]), &set(&["d1"])), Some(1.0));
        assert_eq!(average_precision(&ranking(&["d1", "d2", "d3"]), &set(&["d2"])), Some(0.5));
        let ap = average_precision(&ranking(&["d1", "d2", "d3"]), &set(&["d1", "d3"])).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((ap - 0.8333).abs() < 1e-4);
        assert_eq!(average_precision(&ranking(&["d1"]), &set(&[])), None);
        // unretrieved relevant document contributes zero
        assert_eq!(average_precision(&ranking(&["d1"]), &set(&["d1", "d9"])), Some(0.5));
    }

    #[test]
    fn map_examples() {
        let (qrels, _) = Qrels::parse("a 0 x 1\nb 0 y 1\n".as_bytes()).unwrap();
        let mut ra = ranking(&["x", "y"]);
        ra.query_id = "a".into();
        let mut rb = ranking(&["x", "y"]);
        rb.query_id = "b".into();
        let mut rc = ranking(&["x"]);
        rc.query_id = "c".into();
        let report = mean_average_precision(&[ra.clone(), rb.clone(), rc], &qrels).unwrap();
        assert_eq!(report.map, 0.75);
        assert_eq!(report.skipped, vec!["c".to_owned()]);
        assert_eq!(mean_average_precision(&[ra], &qrels).unwrap().map, 1.0);
        assert!(matches!(
            mean_average_precision(&[], &qrels),
            Err(Error::NoEvaluableQueries)
        ));
    }

    #[test]
    fn ttest_identical_and_degenerate() {
        let a = [0.1, 0.4, 0.3];
        let r = paired_ttest(&a, &a, 1, 0.05).unwrap();
        assert_eq!((r.t_statistic, r.p_value, r.significant), (0.0, 1.0, false));

        let b = [0.0, 0.0, 0.0, 0.0];
        let r = paired_ttest(&[1.0; 4], &b, 1, 0.05).unwrap();
        assert!(r.degenerate && r.significant);
        assert_eq!(r.p_value, 0.0);

        assert!(paired_ttest(&[1.0, 2.0], &[1.0], 1, 0.05).is_err());
    }

    #[test]
    fn ttest_five_differences() {
        // reference values from scipy.stats.ttest_1samp
        let d = [0.1, 0.2, -0.05, 0.15, 0.1];
        let r = paired_ttest(&d, &[0.0; 5], 1, 0.05).unwrap();
        assert!((r.t_statistic - 2.390_457_218_668_787).abs() < 1e-12);
        assert!((r.p_value - 0.075_130_454_625_229_76).abs() < 1e-10);
        assert!(!r.significant);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        for n in 1..20u32 {
            let fact: f64 = (1..n).map(f64::from).product();
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-10, "n = {n}");
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn histogram_examples() {
        let h = position_histogram(&[vec![1, 1], vec![1]]).unwrap();
        assert_eq!(h[0], 1.0);
        assert!(h[1..].iter().all(|&x| x == 0.0));

        let h = position_histogram(&[vec![1, 2], vec![11, 15]]).unwrap();
        assert_eq!(h[0], 0.25);
        assert_eq!(h[1], 0.25);
        assert_eq!(h[10], 0.5);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        assert!(position_histogram(&[]).is_err());
        assert!(position_histogram(&[vec![]]).is_err());
    }
}
