//! Run configuration: a TOML file with one table per concern.
//!
//! Every section and field has a default, unknown keys are rejected, and
//! [`RunConfig::resolved`] fills in the values that depend on other values
//! (the time step and relative paths) so the echo written next to every
//! artifact reproduces the run on its own.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{
    cfl_bounds, stream_function_velocity, zero_control, Control, InitialData, Model, PhasePreset,
    TimeScheme, VelocityPreset,
};
use crate::grid::Grid2D;
use crate::io::{Checkpoint, CheckpointKind};
use crate::nonlocal::{Kernel, KernelFamily};
use crate::optimizer::{ControlBounds, ControlProblem, CostWeights, OptimizerSettings, Targets};
use crate::physics::{HypothesisConstants, Potential, SampleRange, Viscosity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    /// seed for randomized directions and sampling
    pub seed: u64,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub kernel: KernelConfig,
    pub potential: Potential,
    pub viscosity: Viscosity,
    pub hypotheses: HypothesisConfig,
    pub initial: InitialConfig,
    pub control: ControlSpec,
    pub targets: TargetSpec,
    pub weights: CostWeights,
    pub bounds: BoundsSpec,
    pub optimizer: OptimizerSettings,
    pub checks: CheckConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            lx: 10.0,
            ly: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// omitted: `dt_safety` times the viscous bound
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub dt_safety: f64,
    pub nt: usize,
    pub s_stab: f64,
    pub tol_p: f64,
    pub max_iter: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        let s = TimeScheme::new(0.0, 50);
        Self {
            dt: None,
            dt_safety: 0.9,
            nt: s.nt,
            s_stab: s.s_stab,
            tol_p: s.tol_p,
            max_iter: s.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    MollifiedNewtonian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelKind,
    pub amplitude: f64,
    /// Gaussian width
    pub sigma: f64,
    /// mollification radius of the Newtonian kernel
    pub core: f64,
    /// rescale so that `min a = 1 + c1`
    pub auto_scale: bool,
    pub c1: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelKind::Gaussian,
            amplitude: 1.0,
            sigma: 0.625,
            core: 0.625,
            auto_scale: true,
            c1: HypothesisConstants::default().c1,
        }
    }
}

impl KernelConfig {
    pub fn family(&self) -> KernelFamily {
        match self.family {
            KernelKind::Gaussian => KernelFamily::Gaussian {
                amplitude: self.amplitude,
                sigma: self.sigma,
            },
            KernelKind::MollifiedNewtonian => KernelFamily::MollifiedNewtonian {
                amplitude: self.amplitude,
                core: self.core,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisConfig {
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub p: f64,
    pub r: f64,
    pub sample_lo: f64,
    pub sample_hi: f64,
    pub sample_points: usize,
    pub admissibility_samples: usize,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        let c = HypothesisConstants::default();
        let r = SampleRange::default();
        Self {
            c2: c.c2,
            c3: c.c3,
            c4: c.c4,
            c5: c.c5,
            p: c.p,
            r: c.r,
            sample_lo: r.lo,
            sample_hi: r.hi,
            sample_points: r.points,
            admissibility_samples: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Presets {
        phase: PhasePreset,
        velocity: VelocityPreset,
    },
    /// level `frame` (default: last) of a state checkpoint
    Checkpoint {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<usize>,
    },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Presets {
            phase: PhasePreset::Bubble {
                radius: 3.0,
                center: [5.0, 5.0],
                width: 0.625,
            },
            velocity: VelocityPreset::Rest,
        }
    }
}

/// A time-indexed control field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[derive(Default)]
pub enum ControlSpec {
    #[default]
    Zero,
    /// single-cell vortex of the given peak stream amplitude, scaled by
    /// `1 + growth t/T` over the horizon
    Vortex {
        amplitude: f64,
        growth: f64,
    },
    /// random combination of the lowest `modes x modes` solenoidal sine
    /// modes whose coefficients vary linearly over the horizon; drawn from
    /// the run seed and independent of the resolution
    Random {
        amplitude: f64,
        modes: usize,
    },
    Checkpoint {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    /// trajectory of the model driven by `control` from the initial data
    Synthetic { control: ControlSpec },
    /// the same fields at every level and at the final time
    Static {
        phase: PhasePreset,
        velocity: VelocityPreset,
    },
    /// all levels of a state checkpoint, last level as final target
    Checkpoint { path: PathBuf },
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::Synthetic {
            control: ControlSpec::Vortex {
                amplitude: 1.0,
                growth: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundsSpec {
    Constant {
        lower: f64,
        upper: f64,
    },
    Unbounded,
    /// two control checkpoints
    Checkpoint {
        lower: PathBuf,
        upper: PathBuf,
    },
}

impl Default for BoundsSpec {
    fn default() -> Self {
        BoundsSpec::Constant {
            lower: -2.0,
            upper: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// decreasing perturbation sizes for the remainder tests
    pub eps: Vec<f64>,
    pub direction: ControlSpec,
    /// largest relative tangent/adjoint gap accepted by gradient-check;
    /// omitted: the gap is reported only
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            eps: vec![1e-1, 1e-2, 1e-3, 1e-4],
            direction: ControlSpec::Random {
                amplitude: 1.0,
                modes: 3,
            },
            gap_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn rebase_control(base: &Path, c: &mut ControlSpec) {
    if let ControlSpec::Checkpoint { path } = c {
        rebase(base, path);
    }
}

impl RunConfig {
    /// Parses, validates and resolves a configuration; relative paths are
    /// taken relative to `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let raw: RunConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("unknown field"))
                .unwrap_or("config")
                .to_string();
            Error::Config {
                key,
                message: e.to_string().trim().to_string(),
            }
        })?;
        raw.resolved(base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Fills in derived values and checks everything that does not need a
    /// solve.
    pub fn resolved(mut self, base: &Path) -> Result<Self> {
        if let InitialConfig::Checkpoint { path, .. } = &mut self.initial {
            rebase(base, path);
        }
        rebase_control(base, &mut self.control);
        rebase_control(base, &mut self.checks.direction);
        match &mut self.targets {
            TargetSpec::Synthetic { control } => rebase_control(base, control),
            TargetSpec::Checkpoint { path } => rebase(base, path),
            TargetSpec::Static { .. } => {}
        }
        if let BoundsSpec::Checkpoint { lower, upper } = &mut self.bounds {
            rebase(base, lower);
            rebase(base, upper);
        }
        rebase(base, &mut self.output.dir);

        let grid = self.grid()?;
        if self.time.nt == 0 {
            return Err(Error::config("time.nt", "must be at least 1"));
        }
        if self.time.dt.is_none() {
            if !(self.time.dt_safety > 0.0 && self.time.dt_safety <= 1.0) {
                return Err(Error::config("time.dt_safety", "must lie in (0, 1]"));
            }
            let (visc, _) = cfl_bounds(&grid, self.viscosity.upper, 0.0);
            self.time.dt = Some(self.time.dt_safety * visc);
        }
        if !(self.time.tol_p > 0.0) {
            return Err(Error::config("time.tol_p", "must be positive"));
        }
        let k = &self.kernel;
        let width_ok = match k.family {
            KernelKind::Gaussian => k.sigma > 0.0,
            KernelKind::MollifiedNewtonian => k.core > 0.0,
        };
        if !width_ok {
            return Err(Error::config(
                match k.family {
                    KernelKind::Gaussian => "kernel.sigma",
                    KernelKind::MollifiedNewtonian => "kernel.core",
                },
                "must be positive",
            ));
        }
        if !(k.c1 > 0.0) {
            return Err(Error::config("kernel.c1", "must be positive"));
        }
        if !(self.potential.c4 > 0.0) {
            return Err(Error::config("potential.c4", "must be positive"));
        }
        if !(self.hypotheses.sample_lo < self.hypotheses.sample_hi) {
            return Err(Error::config(
                "hypotheses.sample_lo",
                "must be below sample_hi",
            ));
        }
        self.weights
            .validate()
            .map_err(|e| Error::config("weights", e.to_string()))?;
        if let BoundsSpec::Constant { lower, upper } = self.bounds {
            if !(lower <= upper) {
                return Err(Error::config(
                    "bounds",
                    format!("lower {lower} exceeds upper {upper}"),
                ));
            }
        }
        let o = &self.optimizer;
        if !(o.armijo_c > 0.0 && o.armijo_c < 1.0) {
            return Err(Error::config("optimizer.armijo_c", "must lie in (0, 1)"));
        }
        if !(o.shrink > 0.0 && o.shrink < 1.0) {
            return Err(Error::config("optimizer.shrink", "must lie in (0, 1)"));
        }
        if !(o.tau_min > 0.0 && o.tau_min <= o.tau_max) {
            return Err(Error::config(
                "optimizer.tau_min",
                "need 0 < tau_min <= tau_max",
            ));
        }
        let eps = &self.checks.eps;
        if eps.len() < 4
            || eps.windows(2).any(|w| !(w[1] < w[0]))
            || eps.iter().any(|e| !(*e > 0.0))
        {
            return Err(Error::config(
                "checks.eps",
                "need at least four positive, strictly decreasing values",
            ));
        }
        Ok(self)
    }

    pub fn grid(&self) -> Result<Grid2D> {
        let g = self.grid;
        Grid2D::new(g.nx, g.ny, g.lx, g.ly).map_err(|e| Error::config("grid", e.to_string()))
    }

    pub fn scheme(&self) -> TimeScheme {
        TimeScheme {
            dt: self
                .time
                .dt
                .expect("resolved configuration has a time step"),
            nt: self.time.nt,
            s_stab: self.time.s_stab,
            tol_p: self.time.tol_p,
            max_iter: self.time.max_iter,
        }
    }

    pub fn hypothesis_constants(&self) -> HypothesisConstants {
        let h = &self.hypotheses;
        HypothesisConstants {
            c1: self.kernel.c1,
            c2: h.c2,
            c3: h.c3,
            c4: h.c4,
            c5: h.c5,
            p: h.p,
            r: h.r,
        }
    }

    pub fn sample_range(&self) -> SampleRange {
        SampleRange {
            lo: self.hypotheses.sample_lo,
            hi: self.hypotheses.sample_hi,
            points: self.hypotheses.sample_points,
        }
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let k = Kernel::new(self.kernel.family(), self.grid()?)?;
        if self.kernel.auto_scale {
            k.scaled_to_min_a(1.0 + self.kernel.c1)
        } else {
            Ok(k)
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(
            self.kernel()?,
            self.potential,
            self.viscosity,
            self.scheme(),
        )
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        let grid = self.grid()?;
        let init = match &self.initial {
            InitialConfig::Presets { phase, velocity } => {
                InitialData::new(velocity.build(grid), phase.build(grid))
            }
            InitialConfig::Checkpoint { path, frame } => {
                let c = load_kind(path, CheckpointKind::State, grid, "initial.path")?;
                let k = frame.unwrap_or(c.nt);
                let f = c.frames.get(k).ok_or_else(|| {
                    Error::config("initial.frame", format!("checkpoint has no level {k}"))
                })?;
                InitialData::new(f.vector.clone(), f.scalar.clone())
            }
        };
        init.validate(self.time.tol_p.max(1e-10))?;
        Ok(init)
    }

    pub fn build_control(&self, spec: &ControlSpec, key: &str) -> Result<Control> {
        let grid = self.grid()?;
        let nt = self.time.nt;
        Ok(match spec {
            ControlSpec::Zero => zero_control(grid, nt),
            ControlSpec::Vortex { amplitude, growth } => (0..nt)
                .map(|k| {
                    let a = amplitude * (1.0 + growth * k as f64 / nt as f64);
                    stream_function_velocity(grid, |x, y| {
                        a * grid.lx / PI
                            * (PI * x / grid.lx).sin().powi(2)
                            * (PI * y / grid.ly).sin().powi(2)
                    })
                })
                .collect(),
            ControlSpec::Random { amplitude, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let m = (*modes).max(1);
                let mut draw = || {
                    (0..m * m)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect::<Vec<f64>>()
                };
                let (c0, c1) = (draw(), draw());
                let scale = amplitude * grid.lx / (PI * m as f64);
                (0..nt)
                    .map(|k| {
                        let t = k as f64 / nt as f64;
                        stream_function_velocity(grid, |x, y| {
                            let mut s = 0.0;
                            for a in 0..m {
                                for b in 0..m {
                                    s += (c0[a * m + b] + t * c1[a * m + b])
                                        * (PI * (a + 1) as f64 * x / grid.lx).sin()
                                        * (PI * (b + 1) as f64 * y / grid.ly).sin();
                                }
                            }
                            scale * s
                        })
                    })
                    .collect()
            }
            ControlSpec::Checkpoint { path } => {
                let c = load_kind(path, CheckpointKind::Control, grid, key)?;
                if c.nt != nt {
                    return Err(Error::config(
                        key,
                        format!("control has {} steps, need {nt}", c.nt),
                    ));
                }
                c.control()?
            }
        })
    }

    pub fn targets(&self, model: &Model, init: &InitialData) -> Result<Targets> {
        let grid = model.grid;
        let nt = model.nt();
        match &self.targets {
            TargetSpec::Synthetic { control } => {
                let v = self.build_control(control, "targets.control")?;
                Ok(Targets::from_trajectory(&model.run_forward(&v, init)?))
            }
            TargetSpec::Static { phase, velocity } => {
                let (p, u) = (phase.build(grid), velocity.build(grid));
                Ok(Targets {
                    u_q: vec![u.clone(); nt + 1],
                    phi_q: vec![p.clone(); nt + 1],
                    u_omega: u,
                    phi_omega: p,
                })
            }
            TargetSpec::Checkpoint { path } => {
                let c = load_kind(path, CheckpointKind::State, grid, "targets.path")?;
                if c.nt != nt {
                    return Err(Error::config(
                        "targets.path",
                        format!("trajectory has {} steps, need {nt}", c.nt),
                    ));
                }
                Ok(Targets {
                    u_q: c.frames.iter().map(|f| f.vector.clone()).collect(),
                    phi_q: c.frames.iter().map(|f| f.scalar.clone()).collect(),
                    u_omega: c.frames[nt].vector.clone(),
                    phi_omega: c.frames[nt].scalar.clone(),
                })
            }
        }
    }

    pub fn bounds(&self) -> Result<ControlBounds> {
        let grid = self.grid()?;
        let nt = self.time.nt;
        let b = match &self.bounds {
            BoundsSpec::Constant { lower, upper } => {
                ControlBounds::constant(grid, nt, *lower, *upper)
            }
            BoundsSpec::Unbounded => ControlBounds::unbounded(grid, nt),
            BoundsSpec::Checkpoint { lower, upper } => ControlBounds {
                lower: self.build_control(
                    &ControlSpec::Checkpoint {
                        path: lower.clone(),
                    },
                    "bounds.lower",
                )?,
                upper: self.build_control(
                    &ControlSpec::Checkpoint {
                        path: upper.clone(),
                    },
                    "bounds.upper",
                )?,
            },
        };
        b.validate()
            .map_err(|e| Error::config("bounds", e.to_string()))?;
        Ok(b)
    }

    pub fn problem(&self) -> Result<ControlProblem> {
        let model = self.model()?;
        let init = self.initial_data()?;
        let targets = self.targets(&model, &init)?;
        let bounds = self.bounds()?;
        ControlProblem::new(model, init, targets, self.weights, bounds)
    }
}

fn load_kind(path: &Path, kind: CheckpointKind, grid: Grid2D, key: &str) -> Result<Checkpoint> {
    let c = Checkpoint::load(path)
        .map_err(|e| Error::config(key, format!("{}: {e}", path.display())))?;
    if c.kind != kind {
        return Err(Error::config(
            key,
            format!("expected a {kind:?} checkpoint, got {:?}", c.kind),
        ));
    }
    if c.grid != grid {
        return Err(Error::config(
            key,
            format!("checkpoint grid {:?} differs from {grid:?}", c.grid),
        ));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml_str(text, Path::new("/base"))
    }

    #[test]
    fn empty_config_resolves_every_default() {
        let c = parse("").unwrap();
        let echo = c.to_toml_string();
        for key in [
            "seed",
            "[grid]",
            "nx",
            "[time]",
            "dt =",
            "nt",
            "s_stab",
            "tol_p",
            "[kernel]",
            "family",
            "sigma",
            "auto_scale",
            "c1",
            "[potential]",
            "c4",
            "[viscosity]",
            "mean",
            "[hypotheses]",
            "sample_points",
            "[initial]",
            "source",
            "[control]",
            "[targets]",
            "[weights]",
            "beta1",
            "gamma",
            "[bounds]",
            "[optimizer]",
            "armijo_c",
            "step_rule",
            "[checks]",
            "eps",
            "[output]",
            "dir",
        ] {
            assert!(echo.contains(key), "{key} missing from\n{echo}");
        }
        let dt = c.time.dt.unwrap();
        let g = c.grid().unwrap();
        assert_eq!(dt, 0.9 * g.dx * g.dx / (8.0 * 1.6));
        assert_eq!(c.output.dir, Path::new("/base/out"));
    }

    #[test]
    fn round_trip_through_echo() {
        let text = r#"
            seed = 7
            [grid]
            nx = 24
            lx = 3.0
            [time]
            nt = 12
            [kernel]
            family = "mollified_newtonian"
            core = 0.3
            [initial]
            source = "presets"
            phase = { kind = "random", amplitude = 0.2, seed = 3 }
            velocity = { kind = "taylor-vortex", amplitude = 0.5 }
            [targets]
            kind = "static"
            phase = { kind = "uniform", value = 0.1 }
            velocity = { kind = "rest" }
            [bounds]
            kind = "unbounded"
            [checks]
            eps = [0.5, 0.05, 0.005, 0.0005, 0.00005]
            gap_tol = 0.05
            direction = { kind = "vortex", amplitude = 1.0, growth = 0.0 }
            [output]
            dir = "runs/a"
        "#;
        let a = parse(text).unwrap();
        let b = parse(&a.to_toml_string()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.grid.ny, 32);
        assert_eq!(a.output.dir, Path::new("/base/runs/a"));
        let c = parse(&RunConfig::default().to_toml_string()).unwrap();
        assert_eq!(parse(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_named() {
        match parse("[grid]\nnz = 3\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "nz"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("colour = 1"), Err(Error::Config { key, .. }) if key == "colour"));
        assert!(matches!(parse("[grid\n"), Err(Error::Config { .. })));
    }

    #[test]
    fn validation_names_the_key() {
        let cases = [
            (
                "[bounds]\nkind = \"constant\"\nlower = 1.0\nupper = -1.0\n",
                "bounds",
            ),
            ("[time]\nnt = 0\n", "time.nt"),
            ("[grid]\nnx = 2\n", "grid"),
            ("[kernel]\nsigma = -1.0\n", "kernel.sigma"),
            ("[checks]\neps = [0.1, 0.2, 0.01, 0.001]\n", "checks.eps"),
            (
                "[weights]\nbeta1 = 0.0\nbeta2 = 0.0\ngamma = 0.0\n",
                "weights",
            ),
            ("[optimizer]\nshrink = 1.5\n", "optimizer.shrink"),
        ];
        for (text, want) in cases {
            match parse(text) {
                Err(Error::Config { key, .. }) => assert_eq!(key, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn builders_produce_consistent_shapes() {
        let mut c = parse("[grid]\nnx = 16\nny = 16\n[time]\nnt = 4\n").unwrap();
        let p = c.problem().unwrap();
        assert_eq!(p.targets.u_q.len(), 5);
        assert_eq!(p.bounds.lower.len(), 4);
        let r1 = c
            .build_control(&c.checks.direction, "checks.direction")
            .unwrap();
        let r2 = c
            .build_control(&c.checks.direction, "checks.direction")
            .unwrap();
        assert_eq!(r1, r2);
        c.seed = 1;
        let r3 = c
            .build_control(&c.checks.direction, "checks.direction")
            .unwrap();
        assert_ne!(r1, r3);
        assert!(r1
            .iter()
            .all(|f| crate::stencil::divergence_face_to_cc(f).max_abs() < 1e-12));
    }

    #[test]
    fn missing_checkpoint_is_a_config_error() {
        let c = parse("[bounds]\nkind = \"checkpoint\"\nlower = \"a.bin\"\nupper = \"b.bin\"\n")
            .unwrap();
        assert!(matches!(c.bounds(), Err(Error::Config { key, .. }) if key == "bounds.lower"));
    }
}
