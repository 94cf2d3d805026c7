//! Run configuration: flat `key = value` lines grouped under `[section]`
//! headers, `#` comments. Every key has a default; unknown sections or keys
//! are errors. [`RunConfig::render`] writes the resolved config in a fixed
//! order and parses back to the same value.
//!
//! ```text
//! [run]
//! seed = 0
//!
//! [data]
//! source = mogp        # mogp | two-atom | csv
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use ffm_core::data::Transform;
use ffm_core::gaussian::{GridKind, KernelSpec};
use ffm_core::operator::{OperatorConfig, DEFAULT_COORD_HARMONICS};
use ffm_core::path::PathParametrization;
use ffm_core::sampler::{Method, SolverConfig};
use ffm_core::train::{LrSchedule, MaskSpec, TrainConfig};

use crate::checkpoint::{family_name, parse_family, parse_grid_kind};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Mogp,
    TwoAtom,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Rows,
    Cols,
}

/// Whether the row standard-deviation filter runs before or after the transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterOrder {
    Before,
    After,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSection {
    pub source: Source,
    pub n: usize,
    pub resolution: usize,
    pub csv: Option<PathBuf>,
    pub layout: Layout,
    pub drop_missing: bool,
    pub grid: GridKind,
    pub transform: Transform,
    pub min_std: Option<f64>,
    /// Required whenever `min_std` is set; there is no default ordering.
    pub filter: Option<FilterOrder>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub kernel: KernelSpec,
    pub path: PathParametrization,
    pub operator: OperatorConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub conditional: bool,
    pub min_observed: usize,
    pub max_observed: usize,
    pub solver: SolverConfig,
    pub count: usize,
}

/// Training epochs when the config does not say. The learning rate drops
/// tenfold every `decay_every` epochs.
pub const DEFAULT_EPOCHS: usize = 60;

impl Default for RunConfig {
    fn default() -> Self {
        let mut operator = OperatorConfig::new(16, 64, 4);
        operator.coord_harmonics = DEFAULT_COORD_HARMONICS;
        Self {
            seed: 0,
            data: DataSection {
                source: Source::Mogp,
                n: 5000,
                resolution: 64,
                csv: None,
                layout: Layout::Rows,
                drop_missing: false,
                grid: GridKind::HalfOpen,
                transform: Transform::None,
                min_std: None,
                filter: None,
            },
            kernel: KernelSpec::reference_1d(),
            path: PathParametrization::default_ot(),
            operator,
            epochs: DEFAULT_EPOCHS,
            batch_size: 64,
            lr: 1e-3,
            decay_every: 50,
            decay_factor: 0.1,
            conditional: false,
            min_observed: 1,
            max_observed: 8,
            solver: SolverConfig {
                method: Method::Dopri5,
                atol: 1e-10,
                rtol: 1e-10,
                max_steps: 100_000,
                chunk_size: 100,
            },
            count: 500,
        }
    }
}

fn bad(section: &str, key: &str, value: &str) -> CliError {
    CliError::Config(format!("[{section}] {key} = {value}: invalid value"))
}

fn num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> CliResult<T> {
    value.parse().map_err(|_| bad(section, key, value))
}

fn flag(section: &str, key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(section, key, value)),
    }
}

fn transform_name(t: Transform) -> &'static str {
    match t {
        Transform::None => "none",
        Transform::DivideByRowMean => "divide-by-row-mean",
        Transform::LogCenter => "log-center",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut c = RunConfig::default();
        // lifting/projection follow width unless set explicitly
        let (mut lifting, mut projection) = (None, None);
        let (mut path_kind, mut sigma_min, mut vp_s) = ("ot".to_string(), 1e-4, 0.08);
        let (mut family, mut variance, mut lengthscale) =
            (c.kernel.family, c.kernel.variance, c.kernel.lengthscale);
        let mut rk4_steps = 200;
        let mut method = "dopri5".to_string();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !SECTIONS.contains(&section.as_str()) {
                    return Err(CliError::Config(format!("line {}: unknown section [{section}]", lineno + 1)));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let s = section.as_str();
            match (s, key) {
                ("run", "seed") => c.seed = num(s, key, value)?,
                ("data", "source") => {
                    c.data.source = match value {
                        "mogp" => Source::Mogp,
                        "two-atom" => Source::TwoAtom,
                        "csv" => Source::Csv,
                        _ => return Err(bad(s, key, value)),
                    }
                }
                ("data", "n") => c.data.n = num(s, key, value)?,
                ("data", "resolution") => c.data.resolution = num(s, key, value)?,
                ("data", "csv") => c.data.csv = (value != "none").then(|| PathBuf::from(value)),
                ("data", "layout") => {
                    c.data.layout = match value {
                        "rows" => Layout::Rows,
                        "cols" => Layout::Cols,
                        _ => return Err(bad(s, key, value)),
                    }
                }
                ("data", "drop_missing") => c.data.drop_missing = flag(s, key, value)?,
                ("data", "grid") => c.data.grid = parse_grid_kind(value).ok_or_else(|| bad(s, key, value))?,
                ("data", "transform") => {
                    c.data.transform = match value {
                        "none" => Transform::None,
                        "divide-by-row-mean" => Transform::DivideByRowMean,
                        "log-center" => Transform::LogCenter,
                        _ => return Err(bad(s, key, value)),
                    }
                }
                ("data", "min_std") => {
                    c.data.min_std = if value == "none" { None } else { Some(num(s, key, value)?) }
                }
                ("data", "filter") => {
                    c.data.filter = match value {
                        "before" => Some(FilterOrder::Before),
                        "after" => Some(FilterOrder::After),
                        "none" => None,
                        _ => return Err(bad(s, key, value)),
                    }
                }
                ("kernel", "family") => family = parse_family(value).ok_or_else(|| bad(s, key, value))?,
                ("kernel", "variance") => variance = num(s, key, value)?,
                ("kernel", "lengthscale") => lengthscale = num(s, key, value)?,
                ("path", "kind") => path_kind = value.to_string(),
                ("path", "sigma_min") => sigma_min = num(s, key, value)?,
                ("path", "s") => vp_s = num(s, key, value)?,
                ("operator", "modes") => c.operator.modes = num(s, key, value)?,
                ("operator", "width") => c.operator.width = num(s, key, value)?,
                ("operator", "layers") => c.operator.layers = num(s, key, value)?,
                ("operator", "lifting") => lifting = Some(num(s, key, value)?),
                ("operator", "projection") => projection = Some(num(s, key, value)?),
                ("operator", "coord_harmonics") => c.operator.coord_harmonics = num(s, key, value)?,
                ("train", "epochs") => c.epochs = num(s, key, value)?,
                ("train", "batch_size") => c.batch_size = num(s, key, value)?,
                ("train", "lr") => c.lr = num(s, key, value)?,
                ("train", "decay_every") => c.decay_every = num(s, key, value)?,
                ("train", "decay_factor") => c.decay_factor = num(s, key, value)?,
                ("train", "conditional") => c.conditional = flag(s, key, value)?,
                ("train", "min_observed") => c.min_observed = num(s, key, value)?,
                ("train", "max_observed") => c.max_observed = num(s, key, value)?,
                ("solver", "method") => method = value.to_string(),
                ("solver", "atol") => c.solver.atol = num(s, key, value)?,
                ("solver", "rtol") => c.solver.rtol = num(s, key, value)?,
                ("solver", "max_steps") => c.solver.max_steps = num(s, key, value)?,
                ("solver", "rk4_steps") => rk4_steps = num(s, key, value)?,
                ("solver", "chunk_size") => c.solver.chunk_size = num(s, key, value)?,
                ("sample", "count") => c.count = num(s, key, value)?,
                ("", _) => {
                    return Err(CliError::Config(format!(
                        "line {}: `{key}` appears before any [section]",
                        lineno + 1
                    )))
                }
                _ => return Err(CliError::Config(format!("line {}: unknown key [{s}] {key}", lineno + 1))),
            }
        }
        c.operator.lifting = lifting.unwrap_or(c.operator.width);
        c.operator.projection = projection.unwrap_or(c.operator.width);
        c.operator.cond_channels = if c.conditional { 2 } else { 0 };
        c.path = match path_kind.as_str() {
            "ot" => PathParametrization::ot(sigma_min),
            "vp" => PathParametrization::vp(vp_s),
            _ => return Err(bad("path", "kind", &path_kind)),
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        c.kernel = KernelSpec::new(family, variance, lengthscale).map_err(|e| CliError::Config(e.to_string()))?;
        c.solver.method = match method.as_str() {
            "dopri5" => Method::Dopri5,
            "rk4" => Method::Rk4 { steps: rk4_steps },
            _ => return Err(bad("solver", "method", &method)),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg = |e: ffm_core::Error| CliError::Config(e.to_string());
        self.operator.validate().map_err(cfg)?;
        self.solver.validate().map_err(cfg)?;
        self.train_config().validate().map_err(cfg)?;
        if self.data.source == Source::Csv && self.data.csv.is_none() {
            return Err(CliError::Config("[data] source = csv needs a `csv` path".into()));
        }
        if self.data.resolution < 2 {
            return Err(CliError::Config("[data] resolution must be at least 2".into()));
        }
        if self.data.min_std.is_some() && self.data.filter.is_none() {
            return Err(CliError::Config(
                "[data] min_std needs `filter = before` or `filter = after` (relative to the transform)".into(),
            ));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(CliError::Config("[train] decay_factor must lie in (0, 1]".into()));
        }
        if self.conditional && self.min_observed > self.max_observed {
            return Err(CliError::Config("[train] min_observed exceeds max_observed".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            schedule: LrSchedule {
                lr: self.lr,
                decay_every: self.decay_every,
                factor: self.decay_factor,
            },
            seed: self.train_seed(),
            path: self.path,
            masks: self.conditional.then_some(MaskSpec {
                min_observed: self.min_observed,
                max_observed: self.max_observed,
            }),
        }
    }

    // Every stage draws from its own stream derived from the one run seed.
    pub fn data_seed(&self) -> u64 {
        self.seed
    }
    pub fn init_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
    pub fn train_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
    pub fn sample_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    /// Canonical text of the resolved config.
    pub fn render(&self) -> String {
        let mut o = String::new();
        let d = &self.data;
        let w = &mut o;
        let _ = writeln!(w, "[run]\nseed = {}\n", self.seed);
        let source = match d.source {
            Source::Mogp => "mogp",
            Source::TwoAtom => "two-atom",
            Source::Csv => "csv",
        };
        let _ = writeln!(w, "[data]\nsource = {source}\nn = {}\nresolution = {}", d.n, d.resolution);
        let csv = d.csv.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let _ = writeln!(w, "csv = {csv}");
        let layout = if d.layout == Layout::Rows { "rows" } else { "cols" };
        let grid = if d.grid == GridKind::HalfOpen { "half-open" } else { "inclusive" };
        let _ = writeln!(w, "layout = {layout}\ndrop_missing = {}\ngrid = {grid}", d.drop_missing);
        let _ = writeln!(w, "transform = {}", transform_name(d.transform));
        let min_std = d.min_std.map_or("none".to_string(), |v| format!("{v:?}"));
        let filter = match d.filter {
            Some(FilterOrder::Before) => "before",
            Some(FilterOrder::After) => "after",
            None => "none",
        };
        let _ = writeln!(w, "min_std = {min_std}\nfilter = {filter}\n");
        let _ = writeln!(
            w,
            "[kernel]\nfamily = {}\nvariance = {:?}\nlengthscale = {:?}\n",
            family_name(self.kernel.family),
            self.kernel.variance,
            self.kernel.lengthscale
        );
        match self.path {
            PathParametrization::Ot { sigma_min } => {
                let _ = writeln!(w, "[path]\nkind = ot\nsigma_min = {sigma_min:?}\n");
            }
            PathParametrization::Vp { s } => {
                let _ = writeln!(w, "[path]\nkind = vp\ns = {s:?}\n");
            }
        }
        let op = &self.operator;
        let _ = writeln!(
            w,
            "[operator]\nmodes = {}\nwidth = {}\nlayers = {}\nlifting = {}\nprojection = {}\ncoord_harmonics = {}\n",
            op.modes, op.width, op.layers, op.lifting, op.projection, op.coord_harmonics
        );
        let _ = writeln!(
            w,
            "[train]\nepochs = {}\nbatch_size = {}\nlr = {:?}\ndecay_every = {}\ndecay_factor = {:?}",
            self.epochs, self.batch_size, self.lr, self.decay_every, self.decay_factor
        );
        let _ = writeln!(
            w,
            "conditional = {}\nmin_observed = {}\nmax_observed = {}\n",
            self.conditional, self.min_observed, self.max_observed
        );
        let (method, steps) = match self.solver.method {
            Method::Dopri5 => ("dopri5", 200),
            Method::Rk4 { steps } => ("rk4", steps),
        };
        let s = &self.solver;
        let _ = writeln!(
            w,
            "[solver]\nmethod = {method}\natol = {:?}\nrtol = {:?}\nmax_steps = {}\nrk4_steps = {steps}\nchunk_size = {}\n",
            s.atol, s.rtol, s.max_steps, s.chunk_size
        );
        let _ = writeln!(w, "[sample]\ncount = {}", self.count);
        o
    }
}

const SECTIONS: [&str; 8] = ["run", "data", "kernel", "path", "operator", "train", "solver", "sample"];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.lr, 1e-3);
        assert_eq!(c.kernel, KernelSpec::reference_1d());
        assert_eq!((c.solver.atol, c.solver.rtol), (1e-10, 1e-10));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(matches!(RunConfig::parse("[train]\nlearning_rate = 1"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[model]\nwidth = 1"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("seed = 1"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[train]\nepochs"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[train]\nepochs = -1"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[path]\nkind = sde"), Err(CliError::Config(_))));
    }

    #[test]
    fn values_and_comments_parse() {
        let c = RunConfig::parse(
            "# run\n[run]\nseed = 7 # trailing\n[operator]\nwidth = 8\n[path]\nkind = vp\ns = 0.1\n[solver]\nmethod = rk4\nrk4_steps = 50\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!((c.operator.width, c.operator.lifting, c.operator.projection), (8, 8, 8));
        assert_eq!(c.path, PathParametrization::Vp { s: 0.1 });
        assert_eq!(c.solver.method, Method::Rk4 { steps: 50 });
    }

    #[test]
    fn csv_source_needs_a_path() {
        assert!(RunConfig::parse("[data]\nsource = csv").is_err());
        assert!(RunConfig::parse("[data]\nsource = csv\ncsv = a.csv").is_ok());
    }

    #[test]
    fn std_filter_needs_an_explicit_order() {
        assert!(RunConfig::parse("[data]\nmin_std = 0.3").is_err());
        let c = RunConfig::parse("[data]\nmin_std = 0.3\nfilter = before").unwrap();
        assert_eq!(c.data.filter, Some(FilterOrder::Before));
    }

    #[test]
    fn conditional_training_adds_two_channels() {
        let c = RunConfig::parse("[train]\nconditional = true").unwrap();
        assert_eq!(c.operator.cond_channels, 2);
        assert!(c.train_config().masks.is_some());
    }

    proptest! {
        #[test]
        fn render_parses_back(seed in any::<u64>(), width in 1usize..128, lr in 1e-6f64..1.0,
                              tol in 1e-12f64..1e-2, vp in any::<bool>(), epochs in 0usize..500) {
            let mut c = RunConfig::default();
            c.seed = seed;
            c.operator.width = width;
            c.operator.lifting = width;
            c.operator.projection = width + 1;
            c.lr = lr;
            c.solver.atol = tol;
            c.epochs = epochs;
            if vp {
                c.path = PathParametrization::vp(0.08).unwrap();
            }
            let text = c.render();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.render(), text);
        }
    }
}
