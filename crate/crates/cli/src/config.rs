//! Experiment configuration: TOML in, validated model types out.
//!
//! Every field is checked before anything runs, and each problem becomes a
//! [`Diagnostic`] anchored to the line of the offending value when the
//! configuration came from text.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use srtaccel::analysis::default_axis;
use srtaccel::dse::SearchOptions;
use srtaccel::model::{Cycles, LayerShape, Policy, ReleaseModel, ResourceVector, TaskSet, TaskSpec};
use toml::Spanned;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl Diagnostic {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            line: None,
            column: None,
        }
    }

    pub fn at(message: impl Into<String>, text: Option<&str>, span: Option<Range<usize>>) -> Self {
        let mut d = Self::new(message);
        if let (Some(text), Some(span)) = (text, span) {
            let before = &text[..span.start.min(text.len())];
            d.line = Some(before.matches('\n').count() + 1);
            d.column = Some(before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1);
        }
        d
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

/// Beam width: a positive integer or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamWidth(pub Option<usize>);

impl Serialize for BeamWidth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(b) => s.serialize_u64(b as u64),
            None => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for BeamWidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(b) => Ok(BeamWidth(Some(b as usize))),
            Raw::Text(t) if t == "inf" => Ok(BeamWidth(None)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "beam width must be a positive integer or \"inf\", got \"{t}\""
            ))),
        }
    }
}

impl std::str::FromStr for BeamWidth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "inf" {
            return Ok(BeamWidth(None));
        }
        match s.parse::<usize>() {
            Ok(b) if b > 0 => Ok(BeamWidth(Some(b))),
            _ => Err(format!("expected a positive integer or \"inf\", got \"{s}\"")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformConfig {
    pub pe_count: Spanned<u64>,
    pub onchip_mem_words: Spanned<u64>,
    pub onchip_bw_words_per_cycle: Spanned<u64>,
    pub ddr_bw_words_per_cycle: Spanned<u64>,
    /// Needed only when some period is given in microseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_mhz: Option<Spanned<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: Spanned<usize>,
    /// `(M, K, N)` per layer, in execution order.
    pub layers: Spanned<Vec<[u64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Spanned<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_us: Option<Spanned<f64>>,
    #[serde(default)]
    pub release: ReleaseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DseConfig {
    pub max_m: usize,
    pub beam_width: BeamWidth,
    pub grid: u64,
    pub policy: Policy,
    /// Cap on designs enumerated by the exhaustive oracle in `beam-study`.
    pub node_budget: u64,
    /// Widths compared by `beam-study`, narrowest first.
    pub study_widths: Vec<BeamWidth>,
}

impl Default for DseConfig {
    fn default() -> Self {
        Self {
            max_m: 3,
            beam_width: BeamWidth(Some(8)),
            grid: 4,
            policy: Policy::Fifo,
            node_budget: 1_000_000,
            study_widths: [Some(1), Some(2), Some(4), Some(8), None].map(BeamWidth).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Horizon in multiples of the longest period.
    pub horizon_mult: u64,
    pub seeds: Vec<u64>,
    /// Charge save and reload cycles on EDF preemption.
    pub overhead: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon_mult: 128,
            seeds: vec![0],
            overhead: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// One ascending ratio axis per task; seven log-spaced points in
    /// `[0.25, 4]` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub platform: PlatformConfig,
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub dse: DseConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| vec![Diagnostic::at(e.message().trim(), Some(text), e.span())])?;
    let diags = cfg.validate(Some(text));
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(diags)
    }
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable as TOML")
    }

    /// All problems found, in document order where possible. `text` is the
    /// source the spans refer to, if any.
    pub fn validate(&self, text: Option<&str>) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let at = |msg: String, span: Range<usize>| Diagnostic::at(msg, text, Some(span));

        let p = &self.platform;
        for (name, v) in [
            ("pe_count", &p.pe_count),
            ("onchip_mem_words", &p.onchip_mem_words),
            ("onchip_bw_words_per_cycle", &p.onchip_bw_words_per_cycle),
            ("ddr_bw_words_per_cycle", &p.ddr_bw_words_per_cycle),
        ] {
            if *v.get_ref() == 0 {
                out.push(at(
                    format!("platform.{name}: budget component must be positive"),
                    v.span(),
                ));
            }
        }
        if let Some(c) = &p.clock_mhz {
            if !(c.get_ref().is_finite() && *c.get_ref() > 0.0) {
                out.push(at("platform.clock_mhz: must be positive".into(), c.span()));
            }
        }

        if self.tasks.is_empty() {
            out.push(Diagnostic::new("tasks: at least one task is required"));
        }
        let n = self.tasks.len();
        let mut seen = vec![false; n];
        for (pos, t) in self.tasks.iter().enumerate() {
            let id = *t.id.get_ref();
            let name = format!("task {id}");
            if id >= n {
                out.push(at(format!("{name}: id must be below the task count {n}"), t.id.span()));
            } else if std::mem::replace(&mut seen[id], true) {
                out.push(at(format!("{name}: duplicate id (task entry {pos})"), t.id.span()));
            }
            if t.layers.get_ref().is_empty() {
                out.push(at(format!("{name}: layers must not be empty"), t.layers.span()));
            }
            for (j, l) in t.layers.get_ref().iter().enumerate() {
                if l.contains(&0) {
                    out.push(at(
                        format!("{name}: layers[{j}] has a zero dimension {l:?}"),
                        t.layers.span(),
                    ));
                }
            }
            match (&t.period, &t.period_us) {
                (Some(_), Some(us)) => out.push(at(
                    format!("{name}: give either period or period_us, not both"),
                    us.span(),
                )),
                (None, None) => out.push(at(format!("{name}: missing field period (or period_us)"), t.id.span())),
                (Some(c), None) if *c.get_ref() == 0 => {
                    out.push(at(format!("{name}: period must be positive"), c.span()))
                }
                (None, Some(us)) => match &p.clock_mhz {
                    None => out.push(at(
                        format!("{name}: period_us needs platform.clock_mhz to convert to cycles"),
                        us.span(),
                    )),
                    Some(mhz) => {
                        if us_to_cycles(*us.get_ref(), *mhz.get_ref()).is_none() {
                            out.push(at(format!("{name}: period_us must be at least one cycle"), us.span()));
                        }
                    }
                },
                _ => {}
            }
        }

        let d = &self.dse;
        if d.max_m == 0 {
            out.push(Diagnostic::new("dse.max_m: must be at least 1"));
        }
        if d.beam_width.0 == Some(0) || d.study_widths.iter().any(|w| w.0 == Some(0)) {
            out.push(Diagnostic::new("dse: beam widths must be positive or \"inf\""));
        }
        if d.study_widths.is_empty() {
            out.push(Diagnostic::new("dse.study_widths: must not be empty"));
        }
        if d.grid < 2 {
            out.push(Diagnostic::new("dse.grid: must be at least 2"));
        }
        if self.sim.horizon_mult < srtaccel::sim::MIN_HORIZON_PERIODS {
            out.push(Diagnostic::new(format!(
                "sim.horizon_mult: must be at least {} for a divergence verdict",
                srtaccel::sim::MIN_HORIZON_PERIODS
            )));
        }
        if self.sim.seeds.is_empty() {
            out.push(Diagnostic::new("sim.seeds: at least one seed is required"));
        }
        if let Some(axes) = &self.sweep.axes {
            if axes.len() != n {
                out.push(Diagnostic::new(format!(
                    "sweep.axes: expected one axis per task ({n}), got {}",
                    axes.len()
                )));
            }
            for (i, a) in axes.iter().enumerate() {
                let ok =
                    !a.is_empty() && a.iter().all(|r| r.is_finite() && *r > 0.0) && a.windows(2).all(|w| w[0] < w[1]);
                if !ok {
                    out.push(Diagnostic::new(format!(
                        "sweep.axes[{i}]: ratios must be positive and strictly ascending"
                    )));
                }
            }
        }
        if self.output.dir.is_empty() {
            out.push(Diagnostic::new("output.dir: must not be empty"));
        }
        out
    }

    pub fn budget(&self) -> ResourceVector {
        let p = &self.platform;
        ResourceVector::new(
            *p.pe_count.get_ref(),
            *p.onchip_mem_words.get_ref(),
            *p.onchip_bw_words_per_cycle.get_ref(),
            *p.ddr_bw_words_per_cycle.get_ref(),
        )
    }

    /// Tasks ordered by id, periods in cycles. Call only on a validated config.
    pub fn taskset(&self) -> TaskSet {
        let mhz = self.platform.clock_mhz.as_ref().map(|c| *c.get_ref());
        let mut tasks: Vec<TaskSpec> = self
            .tasks
            .iter()
            .map(|t| {
                let layers = t
                    .layers
                    .get_ref()
                    .iter()
                    .map(|&[m, k, n]| LayerShape::new(m, k, n).expect("validated"))
                    .collect();
                let period = match (&t.period, &t.period_us) {
                    (Some(c), _) => *c.get_ref(),
                    (None, Some(us)) => us_to_cycles(*us.get_ref(), mhz.expect("validated")).expect("validated"),
                    (None, None) => unreachable!("validated"),
                };
                TaskSpec::new(*t.id.get_ref(), layers, period).with_release(t.release)
            })
            .collect();
        tasks.sort_by_key(|t| t.id);
        TaskSet::new(tasks).expect("validated")
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions::new(self.dse.max_m, self.dse.beam_width.0, self.dse.grid, self.dse.policy)
    }

    pub fn horizon(&self, ts: &TaskSet) -> Cycles {
        self.sim.horizon_mult.saturating_mul(ts.max_period())
    }

    pub fn sweep_axes(&self) -> Vec<Vec<f64>> {
        self.sweep
            .axes
            .clone()
            .unwrap_or_else(|| vec![default_axis(); self.tasks.len()])
    }
}

/// `round(us * MHz)` cycles, `None` below one cycle.
fn us_to_cycles(us: f64, mhz: f64) -> Option<Cycles> {
    let c = (us * mhz).round();
    (c.is_finite() && c >= 1.0 && c < u64::MAX as f64).then_some(c as Cycles)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[platform]
pe_count = 1
onchip_mem_words = 1
onchip_bw_words_per_cycle = 1
ddr_bw_words_per_cycle = 1

[[tasks]]
id = 0
layers = [[1, 1, 1]]
period = 10
";

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse_config(MINIMAL).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.taskset().task(0).period, 10);
        assert_eq!(cfg.budget(), ResourceVector::new(1, 1, 1, 1));
    }

    #[test]
    fn zero_period_names_task_and_field() {
        let text = MINIMAL.replace("period = 10", "period = 0");
        let d = parse_config(&text).unwrap_err();
        assert_eq!(d.len(), 1);
        assert!(
            d[0].message.contains("task 0") && d[0].message.contains("period"),
            "{}",
            d[0]
        );
        assert_eq!(d[0].line, Some(10));
    }

    #[test]
    fn misspelled_key_is_reported_with_its_line() {
        let text = MINIMAL.replace("period = 10", "perriod = 10");
        let d = parse_config(&text).unwrap_err();
        assert!(d[0].message.contains("perriod"), "{}", d[0]);
        assert_eq!(d[0].line, Some(10));
    }

    #[test]
    fn microsecond_periods_convert_with_the_clock() {
        let text = MINIMAL.replace("period = 10", "period_us = 2.5").replace(
            "ddr_bw_words_per_cycle = 1",
            "ddr_bw_words_per_cycle = 1\nclock_mhz = 200.0",
        );
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.taskset().task(0).period, 500);
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn microseconds_without_clock_are_rejected() {
        let text = MINIMAL.replace("period = 10", "period_us = 2.5");
        let d = parse_config(&text).unwrap_err();
        assert!(d[0].message.contains("clock_mhz"));
    }

    #[test]
    fn zero_budget_and_zero_dimension_are_both_reported() {
        let text = MINIMAL
            .replace("pe_count = 1", "pe_count = 0")
            .replace("[[1, 1, 1]]", "[[1, 0, 1]]");
        let d = parse_config(&text).unwrap_err();
        assert_eq!(d.len(), 2);
        assert!(d[0].message.contains("platform.pe_count"));
        assert_eq!(d[0].line, Some(2));
        assert!(d[1].message.contains("zero dimension"));
    }

    #[test]
    fn task_ids_must_resolve() {
        let text = MINIMAL.replace("id = 0", "id = 3");
        let d = parse_config(&text).unwrap_err();
        assert!(d[0].message.contains("task 3"));
    }

    #[test]
    fn beam_width_accepts_inf() {
        let text = format!("{MINIMAL}\n[dse]\nbeam_width = \"inf\"\nstudy_widths = [1, \"inf\"]\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.dse.beam_width, BeamWidth(None));
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }
}
