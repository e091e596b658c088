//! Experiment manifests: flat `key = value` text with one section per
//! pipeline stage. Parsing is strict (unknown sections or keys are errors)
//! so a manifest always means what it says, and `parse(serialize(c)) == c`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use simvec_core::corpus::Field;
use simvec_core::d2v::TrainParams;
use simvec_core::eval::NegativeStrategy;
use simvec_core::lsi::LsiParams;
use simvec_core::phrases::DEFAULT_MAX_LEN;
use simvec_core::{Result, SimvecError};

/// Word-vector averaging mode for the `w2v-avg` method.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightKind {
    Uniform,
    Tfidf,
}

impl WeightKind {
    pub fn name(self) -> &'static str {
        match self {
            WeightKind::Uniform => "uniform",
            WeightKind::Tfidf => "tfidf",
        }
    }
}

impl std::str::FromStr for WeightKind {
    type Err = SimvecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightKind::Uniform),
            "tfidf" => Ok(WeightKind::Tfidf),
            other => Err(SimvecError::Param(format!(
                "unknown average-weights {other:?}, expected uniform or tfidf"
            ))),
        }
    }
}

/// The vectorization method plus its hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum MethodConfig {
    Tfidf,
    TfidfInc,
    TfidfPhrase,
    Lsi(LsiParams),
    D2v(TrainParams),
    W2vAvg { params: TrainParams, weights: WeightKind },
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Tfidf => "tfidf",
            MethodConfig::TfidfInc => "tfidf-inc",
            MethodConfig::TfidfPhrase => "tfidf-phrase",
            MethodConfig::Lsi(_) => "lsi",
            MethodConfig::D2v(_) => "d2v",
            MethodConfig::W2vAvg { .. } => "w2v-avg",
        }
    }
}

/// One experiment: corpus, preprocessing, method, benchmark, output.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub field: Field,
    pub min_df: u32,
    pub stopwords: Option<PathBuf>,
    pub phrase_max_len: usize,
    pub phrase_top_k: usize,
    pub method: MethodConfig,
    pub positives: PathBuf,
    pub strategy: NegativeStrategy,
    pub n_negatives: usize,
    pub seed: u64,
    pub output: PathBuf,
}

/// Raw key/value table remembering source line numbers and consumption.
struct RawConfig {
    values: BTreeMap<(String, String), (usize, String)>,
    consumed: BTreeMap<(String, String), bool>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    SimvecError::Param(format!("config line {lineno}: unterminated section header"))
                })?;
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(SimvecError::Param(format!(
                        "config line {lineno}: empty section name"
                    )));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimvecError::Param(format!("config line {lineno}: expected key = value"))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if section.is_empty() {
                return Err(SimvecError::Param(format!(
                    "config line {lineno}: {key:?} appears before any [section]"
                )));
            }
            if key.is_empty() || value.is_empty() {
                return Err(SimvecError::Param(format!(
                    "config line {lineno}: empty key or value"
                )));
            }
            let slot = (section.clone(), key.clone());
            if values.insert(slot, (lineno, value)).is_some() {
                return Err(SimvecError::Param(format!(
                    "config line {lineno}: duplicate key {key:?} in [{section}]"
                )));
            }
        }
        let consumed = values.keys().map(|k| (k.clone(), false)).collect();
        Ok(RawConfig { values, consumed })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        let slot = (section.to_string(), key.to_string());
        self.values.get(&slot).map(|(_, v)| {
            self.consumed.insert(slot.clone(), true);
            v.clone()
        })
    }

    fn require(&mut self, section: &str, key: &str) -> Result<String> {
        self.take(section, key).ok_or_else(|| {
            SimvecError::Param(format!("config is missing {key:?} in [{section}]"))
        })
    }

    fn finish(self) -> Result<()> {
        for (slot, used) in &self.consumed {
            if !used {
                let (lineno, _) = &self.values[slot];
                return Err(SimvecError::Param(format!(
                    "config line {lineno}: unknown key {:?} in [{}]",
                    slot.1, slot.0
                )));
            }
        }
        Ok(())
    }
}

fn parsed<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        SimvecError::Param(format!("[{section}] {key} = {value:?} is not a valid value"))
    })
}

fn take_parsed<T: std::str::FromStr>(
    raw: &mut RawConfig,
    section: &str,
    key: &str,
    default: T,
) -> Result<T> {
    match raw.take(section, key) {
        Some(v) => parsed(section, key, &v),
        None => Ok(default),
    }
}

fn parse_bool01(section: &str, key: &str, value: &str) -> Result<bool> {
    match value {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(SimvecError::Param(format!(
            "[{section}] {key} = {value:?}, expected 0 or 1"
        ))),
    }
}

/// D2V knobs shared by the `d2v` and `w2v-avg` methods. The training seed is
/// not a manifest key: it is derived from the top-level run seed.
fn take_train_params(raw: &mut RawConfig) -> Result<TrainParams> {
    let mut p = TrainParams::default();
    p.seed = 0;
    if let Some(v) = raw.take("method", "dm") {
        p.dm = parse_bool01("method", "dm", &v)?;
    }
    if let Some(v) = raw.take("method", "hs") {
        p.hs = parse_bool01("method", "hs", &v)?;
    }
    p.size = take_parsed(raw, "method", "size", p.size)?;
    p.window = take_parsed(raw, "method", "window", p.window)?;
    p.sample = take_parsed(raw, "method", "sample", p.sample)?;
    p.iter = take_parsed(raw, "method", "iter", p.iter)?;
    p.negative = take_parsed(raw, "method", "negative", p.negative)?;
    p.alpha0 = take_parsed(raw, "method", "alpha0", p.alpha0)?;
    p.validate()?;
    Ok(p)
}

/// Parse a manifest. Method parameters are accepted only for the method that
/// owns them; anything left over is an error.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut raw = RawConfig::parse(text)?;

    let input = PathBuf::from(raw.require("corpus", "input")?);
    let field: Field = parsed("corpus", "field", &raw.require("corpus", "field")?)?;

    let min_df = take_parsed(&mut raw, "preprocess", "min-df", 1u32)?;
    let stopwords = raw.take("preprocess", "stopwords").map(PathBuf::from);

    let phrase_max_len = take_parsed(&mut raw, "phrases", "max-len", DEFAULT_MAX_LEN)?;
    let phrase_top_k = take_parsed(&mut raw, "phrases", "top-k", 1000usize)?;
    if phrase_max_len < 2 {
        return Err(SimvecError::Param("[phrases] max-len must be at least 2".into()));
    }

    let method_name = raw.require("method", "name")?;
    let method = match method_name.as_str() {
        "tfidf" => MethodConfig::Tfidf,
        "tfidf-inc" => MethodConfig::TfidfInc,
        "tfidf-phrase" => MethodConfig::TfidfPhrase,
        "lsi" => {
            let d = LsiParams::default();
            let params = LsiParams {
                topics: take_parsed(&mut raw, "method", "topics", d.topics)?,
                chunksize: take_parsed(&mut raw, "method", "chunksize", d.chunksize)?,
                decay: take_parsed(&mut raw, "method", "decay", d.decay)?,
                weighting: match raw.take("method", "weighting") {
                    Some(v) => parsed("method", "weighting", &v)?,
                    None => d.weighting,
                },
            };
            params.validate()?;
            MethodConfig::Lsi(params)
        }
        "d2v" => MethodConfig::D2v(take_train_params(&mut raw)?),
        "w2v-avg" => {
            let params = take_train_params(&mut raw)?;
            let weights = match raw.take("method", "average-weights") {
                Some(v) => parsed("method", "average-weights", &v)?,
                None => WeightKind::Uniform,
            };
            MethodConfig::W2vAvg { params, weights }
        }
        other => {
            return Err(SimvecError::Param(format!(
                "[method] name = {other:?}, expected tfidf, tfidf-inc, tfidf-phrase, lsi, d2v, or w2v-avg"
            )))
        }
    };

    let positives = PathBuf::from(raw.require("benchmark", "positives")?);
    let strategy = match raw.take("benchmark", "negative-strategy") {
        Some(v) => parsed("benchmark", "negative-strategy", &v)?,
        None => NegativeStrategy::Random,
    };
    let n_negatives = take_parsed(&mut raw, "benchmark", "n", 1000usize)?;
    if n_negatives == 0 {
        return Err(SimvecError::Param("[benchmark] n must be at least 1".into()));
    }

    let seed = take_parsed(&mut raw, "run", "seed", 1u64)?;
    let output = PathBuf::from(raw.require("run", "output")?);

    raw.finish()?;
    Ok(RunConfig {
        input,
        field,
        min_df,
        stopwords,
        phrase_max_len,
        phrase_top_k,
        method,
        positives,
        strategy,
        n_negatives,
        seed,
        output,
    })
}

/// Render a manifest with every value resolved, in canonical section order.
pub fn serialize_config(c: &RunConfig) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "[corpus]");
    let _ = writeln!(out, "input = {}", c.input.display());
    let _ = writeln!(out, "field = {}", c.field);
    let _ = writeln!(out, "\n[preprocess]");
    let _ = writeln!(out, "min-df = {}", c.min_df);
    if let Some(sw) = &c.stopwords {
        let _ = writeln!(out, "stopwords = {}", sw.display());
    }
    let _ = writeln!(out, "\n[phrases]");
    let _ = writeln!(out, "max-len = {}", c.phrase_max_len);
    let _ = writeln!(out, "top-k = {}", c.phrase_top_k);
    let _ = writeln!(out, "\n[method]");
    let _ = writeln!(out, "name = {}", c.method.name());
    match &c.method {
        MethodConfig::Tfidf | MethodConfig::TfidfInc | MethodConfig::TfidfPhrase => {}
        MethodConfig::Lsi(p) => {
            let _ = writeln!(out, "topics = {}", p.topics);
            let _ = writeln!(out, "chunksize = {}", p.chunksize);
            let _ = writeln!(out, "decay = {}", p.decay);
            let _ = writeln!(out, "weighting = {}", p.weighting.name());
        }
        MethodConfig::D2v(p) => {
            write_train_params(&mut out, p);
        }
        MethodConfig::W2vAvg { params, weights } => {
            write_train_params(&mut out, params);
            let _ = writeln!(out, "average-weights = {}", weights.name());
        }
    }
    let _ = writeln!(out, "\n[benchmark]");
    let _ = writeln!(out, "positives = {}", c.positives.display());
    let _ = writeln!(out, "negative-strategy = {}", c.strategy.name());
    let _ = writeln!(out, "n = {}", c.n_negatives);
    let _ = writeln!(out, "\n[run]");
    let _ = writeln!(out, "seed = {}", c.seed);
    let _ = writeln!(out, "output = {}", c.output.display());
    out
}

fn write_train_params(out: &mut String, p: &TrainParams) {
    use std::fmt::Write;
    let _ = writeln!(out, "dm = {}", u8::from(p.dm));
    let _ = writeln!(out, "hs = {}", u8::from(p.hs));
    let _ = writeln!(out, "size = {}", p.size);
    let _ = writeln!(out, "window = {}", p.window);
    let _ = writeln!(out, "sample = {}", p.sample);
    let _ = writeln!(out, "iter = {}", p.iter);
    let _ = writeln!(out, "negative = {}", p.negative);
    let _ = writeln!(out, "alpha0 = {}", p.alpha0);
}
