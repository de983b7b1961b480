//! Verification scoring: cosine similarity, EER and minimum DCF.
//!
//! Operating points are evaluated at thresholds midway between consecutive
//! distinct scores, plus one threshold below every score (accept all) and one
//! above (reject all). A trial is accepted when `score >= threshold`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detection cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub p_tar: f64,
    pub c_fa: f64,
    pub c_miss: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            p_tar: 0.01,
            c_fa: 1.0,
            c_miss: 1.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_tar > 0.0 && self.p_tar < 1.0) {
            return Err(Error::Config(format!("p_tar must be in (0, 1), got {}", self.p_tar)));
        }
        if !(self.c_fa > 0.0 && self.c_miss > 0.0) {
            return Err(Error::Config("detection costs must be positive".into()));
        }
        Ok(())
    }

    /// Cost of the better of the two trivial decisions.
    pub fn normalizer(&self) -> f64 {
        (self.c_miss * self.p_tar).min(self.c_fa * (1.0 - self.p_tar))
    }
}

/// Scores of target and nontarget trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    target: Vec<f64>,
    nontarget: Vec<f64>,
}

impl ScoreSet {
    pub fn new(target: Vec<f64>, nontarget: Vec<f64>) -> Result<Self> {
        if target.is_empty() || nontarget.is_empty() {
            return Err(Error::InvalidScores(format!(
                "need at least one target and one nontarget score, got {} and {}",
                target.len(),
                nontarget.len()
            )));
        }
        if target.iter().chain(&nontarget).any(|s| !s.is_finite()) {
            return Err(Error::InvalidScores("scores must be finite".into()));
        }
        Ok(Self { target, nontarget })
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn nontarget(&self) -> &[f64] {
        &self.nontarget
    }

    /// Pools several sets by concatenation.
    pub fn pooled<'a>(sets: impl IntoIterator<Item = &'a ScoreSet>) -> Result<Self> {
        let mut target = Vec::new();
        let mut nontarget = Vec::new();
        for s in sets {
            target.extend_from_slice(&s.target);
            nontarget.extend_from_slice(&s.nontarget);
        }
        Self::new(target, nontarget)
    }

    /// Target and nontarget roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            target: self.nontarget.clone(),
            nontarget: self.target.clone(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.target.iter().map(|&s| f(s)).collect(),
            self.nontarget.iter().map(|&s| f(s)).collect(),
        )
    }
}

/// Miss and false-alarm rates at one candidate threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// All distinct operating points, ordered by increasing threshold.
pub fn operating_points(scores: &ScoreSet) -> Vec<OperatingPoint> {
    let mut tar = scores.target.clone();
    let mut non = scores.nontarget.clone();
    tar.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = tar.iter().chain(&non).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();

    let (nt, nn) = (tar.len() as f64, non.len() as f64);
    let lo = all[0];
    let hi = all[all.len() - 1];
    let mut points = Vec::with_capacity(all.len() + 1);
    points.push(OperatingPoint {
        threshold: lo - 1.0,
        p_miss: 0.0,
        p_fa: 1.0,
    });
    let (mut i, mut j) = (0usize, 0usize);
    for w in all.windows(2) {
        // Everything <= w[0] is rejected.
        while i < tar.len() && tar[i] <= w[0] {
            i += 1;
        }
        while j < non.len() && non[j] <= w[0] {
            j += 1;
        }
        points.push(OperatingPoint {
            threshold: 0.5 * (w[0] + w[1]),
            p_miss: i as f64 / nt,
            p_fa: (non.len() - j) as f64 / nn,
        });
    }
    points.push(OperatingPoint {
        threshold: hi + 1.0,
        p_miss: 1.0,
        p_fa: 0.0,
    });
    points
}

/// Equal error rate and its threshold, interpolating linearly between the
/// two operating points that bracket the crossing.
pub fn compute_eer(scores: &ScoreSet) -> (f64, f64) {
    eer_from_points(&operating_points(scores))
}

pub(crate) fn eer_from_points(points: &[OperatingPoint]) -> (f64, f64) {
    let gap = |p: &OperatingPoint| p.p_miss - p.p_fa;
    let i = points
        .iter()
        .position(|p| gap(p) >= 0.0)
        .expect("reject-all point has p_miss = 1 >= p_fa = 0");
    let cur = points[i];
    if gap(&cur) == 0.0 || i == 0 {
        return (cur.p_fa, cur.threshold);
    }
    let prev = points[i - 1];
    let lambda = -gap(&prev) / (gap(&cur) - gap(&prev));
    let eer = prev.p_fa + lambda * (cur.p_fa - prev.p_fa);
    let threshold = prev.threshold + lambda * (cur.threshold - prev.threshold);
    (eer, threshold)
}

/// Normalized detection cost at one operating point.
pub fn normalized_dcf(p_miss: f64, p_fa: f64, cfg: &EvalConfig) -> f64 {
    (cfg.c_miss * cfg.p_tar * p_miss + cfg.c_fa * (1.0 - cfg.p_tar) * p_fa) / cfg.normalizer()
}

/// Normalized detection cost when accepting `score >= threshold`.
pub fn dcf_at(scores: &ScoreSet, cfg: &EvalConfig, threshold: f64) -> f64 {
    let miss = scores.target.iter().filter(|&&s| s < threshold).count();
    let fa = scores.nontarget.iter().filter(|&&s| s >= threshold).count();
    normalized_dcf(
        miss as f64 / scores.target.len() as f64,
        fa as f64 / scores.nontarget.len() as f64,
        cfg,
    )
}

/// Minimum normalized DCF over all operating points, and its threshold.
pub fn compute_min_dcf(scores: &ScoreSet, cfg: &EvalConfig) -> (f64, f64) {
    min_dcf_from_points(&operating_points(scores), cfg)
}

fn min_dcf_from_points(points: &[OperatingPoint], cfg: &EvalConfig) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::NAN);
    for p in points {
        let c = normalized_dcf(p.p_miss, p.p_fa, cfg);
        if c < best.0 {
            best = (c, p.threshold);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_dcf: f64,
    pub dcf_threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

pub fn evaluate(scores: &ScoreSet, cfg: &EvalConfig) -> EvalReport {
    let points = operating_points(scores);
    let (eer, eer_threshold) = eer_from_points(&points);
    let (min_dcf, dcf_threshold) = min_dcf_from_points(&points, cfg);
    EvalReport {
        eer,
        eer_threshold,
        min_dcf,
        dcf_threshold,
        n_target: scores.target.len(),
        n_nontarget: scores.nontarget.len(),
    }
}

/// Inner product of the L2-normalized inputs.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "embeddings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    /// Parses `label enroll_id test_id` lines with label `1` (target) or `0`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut trials = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [label, enroll, test] = fields[..] else {
                return Err(Error::Parse {
                    line: n + 1,
                    reason: format!("expected 3 fields, found {}", fields.len()),
                });
            };
            let target = match label {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        line: n + 1,
                        reason: format!("label must be 1 or 0, found `{other}`"),
                    })
                }
            };
            trials.push(Trial {
                enroll: enroll.to_string(),
                test: test.to_string(),
                target,
            });
        }
        Ok(Self { trials })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            let _ = writeln!(out, "{} {} {}", u8::from(t.target), t.enroll, t.test);
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Ids referenced by the trials that are missing from `embeddings`,
    /// sorted and deduplicated.
    pub fn missing_ids<V>(&self, embeddings: &HashMap<String, V>) -> Vec<String> {
        let mut missing: Vec<String> = self
            .trials
            .iter()
            .flat_map(|t| [&t.enroll, &t.test])
            .filter(|id| !embeddings.contains_key(*id))
            .cloned()
            .collect();
        missing.sort();
        missing.dedup();
        missing
    }

    /// Cosine-scores every trial.
    pub fn score(&self, embeddings: &HashMap<String, Vec<f64>>) -> Result<ScoreSet> {
        let missing = self.missing_ids(embeddings);
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "{} trial ids have no embedding: {}",
                missing.len(),
                missing.join(", ")
            )));
        }
        let mut target = Vec::new();
        let mut nontarget = Vec::new();
        for t in &self.trials {
            let s = cosine_score(&embeddings[&t.enroll], &embeddings[&t.test])?;
            if t.target {
                target.push(s);
            } else {
                nontarget.push(s);
            }
        }
        ScoreSet::new(target, nontarget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(t: &[f64], n: &[f64]) -> ScoreSet {
        ScoreSet::new(t.to_vec(), n.to_vec()).unwrap()
    }

    #[test]
    fn cosine_basics() {
        let e = [1.0, 2.0, -3.0];
        let neg: Vec<f64> = e.iter().map(|v| -v).collect();
        assert!((cosine_score(&e, &e).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_score(&e, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        assert!(matches!(cosine_score(&[0.0, 0.0], &e[..2]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn eer_examples() {
        assert_eq!(compute_eer(&set(&[3.0, 4.0], &[1.0, 2.0])).0, 0.0);
        assert_eq!(compute_eer(&set(&[1.0, 2.0], &[3.0, 4.0])).0, 1.0);
        let (eer, thr) = compute_eer(&set(&[0.9, 0.7], &[0.8, 0.6]));
        assert_eq!(eer, 0.5);
        assert!((thr - 0.75).abs() < 1e-15);
    }

    #[test]
    fn eer_interpolates_between_points() {
        // One target at 1, nontargets at 1 and 5: the crossing falls between
        // accept-all (p_fa 1, p_miss 0) and threshold 3 (p_fa 0.5, p_miss 1).
        let (eer, _) = compute_eer(&set(&[1.0], &[1.0, 5.0]));
        assert!((eer - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn min_dcf_examples() {
        let cfg = EvalConfig::default();
        assert_eq!(compute_min_dcf(&set(&[3.0, 4.0], &[1.0, 2.0]), &cfg).0, 0.0);
        let s = set(&[0.2, 0.5], &[0.1, 0.4]);
        assert!((dcf_at(&s, &cfg, f64::NEG_INFINITY) - 99.0).abs() < 1e-12);
        assert!((dcf_at(&s, &cfg, f64::INFINITY) - 1.0).abs() < 1e-12);
        assert!(compute_min_dcf(&s, &cfg).0 <= 1.0);
    }

    #[test]
    fn ties_count_as_acceptance() {
        let s = set(&[1.0], &[1.0]);
        let pts = operating_points(&s);
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[0].p_miss, pts[0].p_fa), (0.0, 1.0));
        assert_eq!(dcf_at(&s, &EvalConfig::default(), 1.0), 99.0);
    }

    #[test]
    fn score_set_validation() {
        assert!(ScoreSet::new(vec![], vec![1.0]).is_err());
        assert!(ScoreSet::new(vec![1.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn trial_list_parse_and_missing_ids() {
        let list = TrialList::parse("1 a b\n# comment\n\n0 a c\n").unwrap();
        assert_eq!(list.trials.len(), 2);
        assert!(list.trials[0].target && !list.trials[1].target);
        assert_eq!(TrialList::parse(&list.to_text()).unwrap(), list);
        assert!(matches!(TrialList::parse("2 a b"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(TrialList::parse("1 a\n"), Err(Error::Parse { line: 1, .. })));

        let mut emb = HashMap::new();
        emb.insert("a".to_string(), vec![1.0, 0.0]);
        assert_eq!(list.missing_ids(&emb), vec!["b", "c"]);
        let err = list.score(&emb).unwrap_err().to_string();
        assert!(err.contains("b, c"), "{err}");
        emb.insert("b".to_string(), vec![1.0, 0.1]);
        emb.insert("c".to_string(), vec![-1.0, 0.0]);
        let scores = list.score(&emb).unwrap();
        assert_eq!(compute_eer(&scores).0, 0.0);
    }

    #[test]
    fn eval_config_validation() {
        EvalConfig::default().validate().unwrap();
        assert!(EvalConfig { p_tar: 1.0, ..Default::default() }.validate().is_err());
        assert!(EvalConfig { c_fa: 0.0, ..Default::default() }.validate().is_err());
    }
}
