use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use super::{Call, Channel, Corpus, CorpusError, HoldInterval, Label, PhraseTurn, Provenance};
use crate::compliance::{Anchor, AuditConfig, Violation, ViolationKind, ViolationLedger};

const DEFAULT_OPENING: &str = include_str!("../../data/opening.txt");
const DEFAULT_CLOSING: &str = include_str!("../../data/closing.txt");
const DEFAULT_FILLER: &str = include_str!("../../data/filler.txt");

/// Calls with `i` opening and `j` closing scripts (row `i`, column `j`),
/// as tabulated for a labeled production sample (the cells cover 1238 calls).
pub const JOINT_SCRIPT_COUNTS: [[u64; 7]; 7] = [
    [891, 25, 3, 1, 0, 0, 0],
    [129, 118, 11, 2, 0, 0, 0],
    [13, 5, 5, 1, 0, 0, 0],
    [1, 4, 1, 1, 2, 0, 0],
    [5, 1, 7, 1, 1, 0, 0],
    [1, 1, 3, 1, 0, 0, 0],
    [0, 1, 2, 0, 1, 0, 0],
];

/// Numeric knobs of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileSettings {
    /// Mean number of turns per call (log-normally distributed).
    pub mean_rows_per_call: f64,
    pub rows_sigma: f64,
    /// Weights of (openings, closings) per call; row = openings, column = closings.
    pub joint_counts: Vec<Vec<u64>>,
    /// Probability that a script episode happens without a registered hold.
    pub unregistered_rate: f64,
    /// Probability that a call gets an extra registered hold with no scripts.
    pub silent_hold_rate: f64,
    /// Largest gap between a script turn and the hold boundary it belongs to.
    pub window_noise_ms: u64,
    /// Minimum silence between the end of one episode and the start of the next.
    pub separation_ms: u64,
    pub hold_min_ms: u64,
    pub hold_max_ms: u64,
    /// Up to this many filler words on each side of a script template.
    pub script_padding_words: usize,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        ProfileSettings {
            mean_rows_per_call: 37_297.0 / 1_245.0,
            rows_sigma: 0.6,
            joint_counts: JOINT_SCRIPT_COUNTS.iter().map(|r| r.to_vec()).collect(),
            unregistered_rate: 0.1,
            silent_hold_rate: 0.05,
            window_noise_ms: 10_000,
            separation_ms: 45_000,
            hold_min_ms: 20_000,
            hold_max_ms: 180_000,
            script_padding_words: 3,
        }
    }
}

/// Template pools plus numeric settings for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    pub opening_templates: Vec<String>,
    pub closing_templates: Vec<String>,
    pub filler_words: Vec<String>,
    pub settings: ProfileSettings,
}

impl Default for GeneratorProfile {
    fn default() -> Self {
        GeneratorProfile {
            opening_templates: lines(DEFAULT_OPENING),
            closing_templates: lines(DEFAULT_CLOSING),
            filler_words: lines(DEFAULT_FILLER),
            settings: ProfileSettings::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ProfileFile {
    opening_templates: Option<PathBuf>,
    closing_templates: Option<PathBuf>,
    filler_vocabulary: Option<PathBuf>,
    #[serde(flatten)]
    settings: ProfileSettings,
}

fn lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

impl GeneratorProfile {
    /// Loads a TOML profile. Template paths are resolved relative to the
    /// profile's directory; omitted pools and settings fall back to defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| CorpusError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let file: ProfileFile =
            toml::from_str(&read(path)?).map_err(|e| CorpusError::InvalidProfile(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let pool = |p: Option<PathBuf>, default: &str| -> Result<Vec<String>, CorpusError> {
            match p {
                Some(p) => Ok(lines(&read(&base.join(p))?)),
                None => Ok(lines(default)),
            }
        };
        Ok(GeneratorProfile {
            opening_templates: pool(file.opening_templates, DEFAULT_OPENING)?,
            closing_templates: pool(file.closing_templates, DEFAULT_CLOSING)?,
            filler_words: pool(file.filler_vocabulary, DEFAULT_FILLER)?,
            settings: file.settings,
        })
    }

    /// A profile whose calls never contain scripts or holds.
    pub fn without_scripts() -> Self {
        GeneratorProfile {
            settings: ProfileSettings {
                joint_counts: vec![vec![1]],
                silent_hold_rate: 0.0,
                ..ProfileSettings::default()
            },
            ..GeneratorProfile::default()
        }
    }

    /// Whether auditing with `config` and gold labels reproduces the
    /// generator's violation ledger exactly.
    pub fn consistent_with(&self, config: &AuditConfig) -> bool {
        let s = &self.settings;
        s.window_noise_ms <= config.pre_window_ms
            && s.window_noise_ms <= config.post_window_ms
            && s.separation_ms > config.pre_window_ms.max(config.post_window_ms) + config.grace_ms
            && s.hold_min_ms > config.grace_ms
    }

    fn check(&self) -> Result<(), CorpusError> {
        if self.opening_templates.is_empty() {
            return Err(CorpusError::EmptyTemplatePool("opening"));
        }
        if self.closing_templates.is_empty() {
            return Err(CorpusError::EmptyTemplatePool("closing"));
        }
        if self.filler_words.is_empty() {
            return Err(CorpusError::EmptyTemplatePool("filler"));
        }
        let s = &self.settings;
        let invalid = |msg: &str| Err(CorpusError::InvalidProfile(msg.to_string()));
        if s.mean_rows_per_call.is_nan()
            || s.mean_rows_per_call < 1.0
            || s.rows_sigma.is_nan()
            || s.rows_sigma < 0.0
        {
            return invalid("mean_rows_per_call must be >= 1 and rows_sigma >= 0");
        }
        if !(0.0..=1.0).contains(&s.unregistered_rate) || !(0.0..=1.0).contains(&s.silent_hold_rate)
        {
            return invalid("rates must lie in [0, 1]");
        }
        if s.hold_min_ms == 0 || s.hold_max_ms < s.hold_min_ms {
            return invalid("need 0 < hold_min_ms <= hold_max_ms");
        }
        if s.joint_counts.iter().flatten().all(|&w| w == 0) {
            return invalid("joint_counts has no positive weight");
        }
        Ok(())
    }
}

/// Builds a random but reproducible corpus with gold labels, registered holds,
/// and the list of violations an auditor should find in it.
///
/// Each call is a sequence of "episodes" separated by irrelevant chatter: an
/// opening script followed by a hold and a closing script, or a partial version
/// missing one side. Episodes may go unregistered, and calls may carry silent
/// holds with no scripts at all; each such inconsistency is recorded in the
/// returned ledger.
pub fn generate_synthetic(
    n_calls: usize,
    seed: u64,
    profile: &GeneratorProfile,
) -> Result<(Corpus, ViolationLedger), CorpusError> {
    if n_calls == 0 {
        return Err(CorpusError::InvalidProfile(
            "n_calls must be at least 1".into(),
        ));
    }
    profile.check()?;
    let s = &profile.settings;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let width = s.joint_counts.iter().map(Vec::len).max().unwrap_or(0);
    let cells: Vec<(usize, usize)> = (0..s.joint_counts.len())
        .flat_map(|i| (0..width).map(move |j| (i, j)))
        .collect();
    let weights: Vec<u64> = cells
        .iter()
        .map(|&(i, j)| s.joint_counts[i].get(j).copied().unwrap_or(0))
        .collect();
    let joint =
        WeightedIndex::new(&weights).map_err(|e| CorpusError::InvalidProfile(e.to_string()))?;
    let sigma = s.rows_sigma;
    let rows = LogNormal::new(s.mean_rows_per_call.ln() - sigma * sigma / 2.0, sigma)
        .map_err(|e| CorpusError::InvalidProfile(e.to_string()))?;

    let mut calls = Vec::with_capacity(n_calls);
    let mut violations = Vec::new();
    for n in 0..n_calls {
        let call_id = format!("call{n:05}");
        let (openings, closings) = cells[joint.sample(&mut rng)];
        let target_rows = rows.sample(&mut rng).round().max(1.0) as usize;
        let mut builder = CallBuilder::new(call_id, profile, &mut rng);
        builder.build(openings, closings, target_rows, &mut violations);
        calls.push(builder.finish());
    }

    let corpus = Corpus::new(calls, Provenance::Synthetic, Some(seed))?;
    Ok((corpus, ViolationLedger::new(violations)))
}

#[derive(Debug, Clone, Copy)]
enum Episode {
    Full,
    OpeningOnly,
    ClosingOnly,
    Silent,
}

struct CallBuilder<'a, R: Rng> {
    call_id: String,
    profile: &'a GeneratorProfile,
    rng: &'a mut R,
    turns: Vec<PhraseTurn>,
    holds: Vec<HoldInterval>,
    clock: u64,
}

impl<'a, R: Rng> CallBuilder<'a, R> {
    fn new(call_id: String, profile: &'a GeneratorProfile, rng: &'a mut R) -> Self {
        let clock = rng.random_range(0..2_000);
        CallBuilder {
            call_id,
            profile,
            rng,
            turns: Vec::new(),
            holds: Vec::new(),
            clock,
        }
    }

    fn build(
        &mut self,
        openings: usize,
        closings: usize,
        target_rows: usize,
        violations: &mut Vec<Violation>,
    ) {
        let paired = openings.min(closings);
        let mut episodes: Vec<Episode> = std::iter::repeat_n(Episode::Full, paired)
            .chain(std::iter::repeat_n(Episode::OpeningOnly, openings - paired))
            .chain(std::iter::repeat_n(Episode::ClosingOnly, closings - paired))
            .collect();
        if self.rng.random_bool(self.profile.settings.silent_hold_rate) {
            episodes.push(Episode::Silent);
        }
        episodes.shuffle(self.rng);

        let irrelevant = target_rows.saturating_sub(openings + closings).max(1);
        let mut slots = vec![0usize; episodes.len() + 1];
        for _ in 0..irrelevant {
            let i = self.rng.random_range(0..slots.len());
            slots[i] += 1;
        }

        for (k, &count) in slots.iter().enumerate() {
            if k > 0 {
                self.episode(episodes[k - 1], violations);
            }
            for _ in 0..count {
                self.irrelevant_turn();
            }
        }
    }

    fn finish(self) -> Call {
        Call {
            call_id: self.call_id,
            turns: self.turns,
            holds: self.holds,
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| {
                self.profile
                    .filler_words
                    .choose(self.rng)
                    .expect("non-empty")
                    .clone()
            })
            .collect()
    }

    /// Appends a turn starting at `start`, or after a short pause if `None`.
    fn push_turn(
        &mut self,
        channel: Channel,
        text: String,
        label: Label,
        start: Option<u64>,
    ) -> (u32, u64, u64) {
        let words = text.split_whitespace().count() as u64;
        let start = start.unwrap_or_else(|| self.clock + self.rng.random_range(100..1_500));
        let end = start + 350 * words + self.rng.random_range(200..800);
        let turn_index = self.turns.len() as u32;
        self.turns.push(PhraseTurn {
            call_id: self.call_id.clone(),
            turn_index,
            channel,
            start_ms: start,
            end_ms: end,
            text,
            label: Some(label),
        });
        self.clock = end;
        (turn_index, start, end)
    }

    fn irrelevant_turn(&mut self) {
        let n = (self
            .rng
            .sample(LogNormal::new(6f64.ln(), 0.8).expect("valid"))
            .round() as usize)
            .clamp(1, 60);
        let text = self.words(n).join(" ");
        let channel = if self.rng.random_bool(0.5) {
            Channel::Agent
        } else {
            Channel::Client
        };
        self.push_turn(channel, text, Label::Irrelevant, None);
    }

    fn script_turn(&mut self, label: Label, start: Option<u64>) -> (u32, u64, u64) {
        let pool = match label {
            Label::Opening => &self.profile.opening_templates,
            _ => &self.profile.closing_templates,
        };
        let template = pool.choose(self.rng).expect("non-empty").clone();
        let pad = self.profile.settings.script_padding_words;
        let (before, after) = (
            self.rng.random_range(0..=pad),
            self.rng.random_range(0..=pad),
        );
        let mut parts = self.words(before);
        parts.push(template);
        parts.extend(self.words(after));
        self.push_turn(Channel::Agent, parts.join(" "), label, start)
    }

    fn gap(&mut self) -> u64 {
        self.rng
            .random_range(0..=self.profile.settings.window_noise_ms)
    }

    fn hold_length(&mut self) -> u64 {
        let s = &self.profile.settings;
        self.rng.random_range(s.hold_min_ms..=s.hold_max_ms)
    }

    fn episode(&mut self, kind: Episode, violations: &mut Vec<Violation>) {
        let separation = self.profile.settings.separation_ms;
        self.clock += separation;
        let registered = match kind {
            Episode::Silent => true,
            _ => !self
                .rng
                .random_bool(self.profile.settings.unregistered_rate),
        };

        let opening = match kind {
            Episode::Full | Episode::OpeningOnly => Some(self.script_turn(Label::Opening, None)),
            _ => None,
        };
        let hold_start = match opening {
            Some((_, _, end)) => end + self.gap(),
            None => self.clock + self.rng.random_range(500..3_000),
        };
        let hold = HoldInterval {
            hold_start_ms: hold_start,
            hold_end_ms: hold_start + self.hold_length(),
        };
        self.clock = hold.hold_end_ms;
        let closing = match kind {
            Episode::Full | Episode::ClosingOnly => {
                let start = hold.hold_end_ms + self.gap();
                Some(self.script_turn(Label::Closing, Some(start)))
            }
            _ => None,
        };

        let mut flag = |kind, anchor| {
            violations.push(Violation {
                call_id: self.call_id.clone(),
                kind,
                anchor,
            })
        };
        if registered {
            self.holds.push(hold);
            if opening.is_none() {
                flag(ViolationKind::MissingOpening, Anchor::Hold(hold));
            }
            if closing.is_none() {
                flag(ViolationKind::MissingClosing, Anchor::Hold(hold));
            }
        } else {
            for (turn_index, _, _) in opening.into_iter().chain(closing) {
                flag(ViolationKind::UnregisteredHold, Anchor::Turn(turn_index));
            }
        }
        self.clock += separation;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_arguments_same_corpus() {
        let profile = GeneratorProfile::default();
        let a = generate_synthetic(50, 9, &profile).unwrap();
        let b = generate_synthetic(50, 9, &profile).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(50, 10, &profile).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn zero_script_profile() {
        let (corpus, ledger) =
            generate_synthetic(1, 3, &GeneratorProfile::without_scripts()).unwrap();
        assert_eq!(corpus.calls.len(), 1);
        assert!(corpus.turns().all(|t| t.label == Some(Label::Irrelevant)));
        assert!(corpus.calls[0].holds.is_empty());
        assert!(ledger.is_empty());
    }

    #[test]
    fn empty_pool_is_rejected() {
        let mut profile = GeneratorProfile::default();
        profile.closing_templates.clear();
        assert!(matches!(
            generate_synthetic(3, 0, &profile),
            Err(CorpusError::EmptyTemplatePool("closing"))
        ));
    }

    #[test]
    fn opening_fraction_matches_production_rate() {
        let (corpus, _) = generate_synthetic(1000, 42, &GeneratorProfile::default()).unwrap();
        let counts = corpus.class_counts();
        let fraction = counts[1] as f64 / corpus.num_turns() as f64;
        let target = 463.0 / 37_297.0;
        assert!((fraction - target).abs() < 0.005, "{fraction} vs {target}");
    }

    #[test]
    fn ledger_anchors_exist() {
        let (corpus, ledger) = generate_synthetic(200, 5, &GeneratorProfile::default()).unwrap();
        assert!(!ledger.is_empty());
        for v in &ledger.violations {
            let call = corpus.call(&v.call_id).unwrap();
            match v.anchor {
                Anchor::Hold(h) => assert!(call.holds.contains(&h)),
                Anchor::Turn(t) => assert!(call.find_turn(t).unwrap().label.unwrap().is_script()),
            }
        }
    }

    #[test]
    fn default_profile_fits_default_audit() {
        assert!(GeneratorProfile::default().consistent_with(&AuditConfig::default()));
    }

    #[test]
    fn profile_file_overrides_selected_keys() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("open.txt"), "hang on a sec\n\n# comment\n").unwrap();
        let path = dir.path().join("profile.toml");
        std::fs::write(
            &path,
            "opening_templates = \"open.txt\"\nunregistered_rate = 0.0\njoint_counts = [[0, 0], [0, 1]]\n",
        )
        .unwrap();
        let profile = GeneratorProfile::from_file(&path).unwrap();
        assert_eq!(profile.opening_templates, vec!["hang on a sec".to_string()]);
        assert_eq!(profile.settings.unregistered_rate, 0.0);
        assert_eq!(
            profile.settings.rows_sigma,
            ProfileSettings::default().rows_sigma
        );
        assert_eq!(
            profile.closing_templates,
            GeneratorProfile::default().closing_templates
        );

        let (corpus, _) = generate_synthetic(4, 1, &profile).unwrap();
        for call in &corpus.calls {
            assert_eq!(
                call.turns
                    .iter()
                    .filter(|t| t.label == Some(Label::Opening))
                    .count(),
                1
            );
            assert_eq!(
                call.turns
                    .iter()
                    .filter(|t| t.label == Some(Label::Closing))
                    .count(),
                1
            );
        }
    }
}
