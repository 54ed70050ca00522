//! Pipeline stages behind the CLI: each subcommand computes one stage and
//! writes CSV/JSON into the output directory. Every output file records the
//! config hash and seed; floats are written in shortest round-trip form
//! (micro snapshots use 17-significant-digit scientific, their own
//! contract), so identical configs produce byte-identical outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::diagnostics::{
    compare_micro_macro, defect_residual, shape_check, ComparisonReport, ResidualField,
};
use crate::error::{Error, Result};
use crate::kernel::JumpKernel;
use crate::macroscale::{solve_fd, solve_spectral, MacroField};
use crate::manifold::{
    block_operator, closed_form_order2, derive, validate, zero_eigenspace, DeriveMethod,
    ManifoldValidation, SlowManifold,
};
use crate::mc::{fit_transport_coefficients, histogram, simulate, CoefficientFit, McStats};
use crate::micro::{initial_condition, MicroRun, Simulator};
use crate::profile::VelocityProfile;
use crate::rational::rat_to_string;

pub struct Pipeline {
    cfg: RunConfig,
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct StageRecord {
    name: String,
    status: String,
    files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    config_hash: String,
    seed: u64,
    failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
    stages: Vec<StageRecord>,
}

#[derive(Debug, Serialize)]
pub struct DeriveReport {
    pub config_hash: String,
    pub seed: u64,
    pub order: usize,
    pub method: DeriveMethod,
    /// Orders above 2 extend the hierarchy beyond the quantified-error regime.
    pub extension: bool,
    pub exact: bool,
    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<BTreeMap<String, String>>,
    #[serde(rename = "A_float")]
    pub a_float: BTreeMap<String, f64>,
    #[serde(rename = "V_coeffs", skip_serializing_if = "Option::is_none")]
    pub v_coeffs: Option<Vec<Vec<String>>>,
    #[serde(rename = "V_coeffs_float", skip_serializing_if = "Option::is_none")]
    pub v_coeffs_float: Option<Vec<Vec<f64>>>,
    #[serde(rename = "V_nodes")]
    pub v_nodes: Vec<Vec<f64>>,
    pub profile: ProfileEcho,
    pub validation: ManifoldValidation,
    pub config: RunConfig,
}

#[derive(Debug, Serialize)]
pub struct ProfileEcho {
    pub form: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<crate::config::RatSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<crate::config::RatSpec>>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, out_dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&out_dir)?;
        Ok(Self { cfg, out_dir })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn csv_header(&self) -> String {
        format!(
            "# config_hash={} seed={}",
            self.cfg.hash(),
            self.cfg.mc.seed
        )
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::NumericalFailure(format!("serialization: {e}")))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    fn write_csv(
        &self,
        name: &str,
        columns: &str,
        rows: impl Iterator<Item = String>,
    ) -> Result<PathBuf> {
        let path = self.path(name);
        let file = fs::File::create(&path)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "{}", self.csv_header())?;
        writeln!(w, "{columns}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        w.flush()?;
        Ok(path)
    }

    // ----- derive -----

    pub fn derive_manifold(&self) -> Result<(SlowManifold, VelocityProfile, JumpKernel)> {
        let v = self.cfg.build_profile()?;
        let kernel = self.cfg.build_kernel()?;
        let cs = self.cfg.build_cross_section()?;
        let sm = match self.cfg.derive.method.as_str() {
            "hierarchy" => derive(&kernel, &v, self.cfg.derive.order, &cs)?,
            "eigenspace" => {
                let b = block_operator(&kernel, &v, self.cfg.derive.order, &cs)?;
                zero_eigenspace(&b, &cs)?
            }
            _ => closed_form_order2(&v, &cs)?,
        };
        Ok((sm, v, kernel))
    }

    pub fn derive_report(&self) -> Result<DeriveReport> {
        let (sm, v, kernel) = self.derive_manifold()?;
        let cs = self.cfg.build_cross_section()?;
        let validation = validate(&sm, &kernel, &v, &cs)?;
        let a = sm.a_exact.as_ref().map(|a| {
            a.iter()
                .enumerate()
                .map(|(i, r)| (format!("A{}", i + 1), rat_to_string(r)))
                .collect()
        });
        let a_float =
            sm.a.iter()
                .enumerate()
                .map(|(i, x)| (format!("A{}", i + 1), *x))
                .collect();
        let v_coeffs = sm.v_exact.as_ref().map(|shapes| {
            shapes
                .iter()
                .map(|p| p.coeffs().iter().map(rat_to_string).collect())
                .collect()
        });
        let v_coeffs_float = sm
            .v_exact
            .as_ref()
            .map(|shapes| shapes.iter().map(|p| p.coeffs_f64()).collect());
        Ok(DeriveReport {
            config_hash: self.cfg.hash(),
            seed: self.cfg.mc.seed,
            order: sm.order,
            method: sm.method,
            extension: sm.extension,
            exact: sm.a_exact.is_some(),
            a,
            a_float,
            v_coeffs,
            v_coeffs_float,
            v_nodes: sm.v.iter().map(|f| f.values().to_vec()).collect(),
            profile: ProfileEcho {
                form: self.cfg.profile.clone(),
                c: self.cfg.c.clone(),
                coeffs: self.cfg.coeffs.clone(),
            },
            validation,
            config: self.cfg.clone(),
        })
    }

    pub fn cmd_derive(&self) -> Result<Vec<PathBuf>> {
        let report = self.derive_report()?;
        Ok(vec![self.write_json("derive.json", &report)?])
    }

    // ----- micro -----

    pub fn micro_run(&self) -> Result<(MicroRun, Simulator)> {
        let grid = self.cfg.build_grid()?;
        let kernel = self.cfg.build_kernel()?;
        let v = self.cfg.build_profile()?;
        let sim = Simulator::new(grid, &kernel, &v)?;
        let ic = initial_condition(&self.cfg.build_ic()?, sim.grid())?;
        let run = sim.run(&self.cfg.micro_run_config(), &ic)?;
        Ok((run, sim))
    }

    fn write_micro(&self, run: &MicroRun, sim: &Simulator) -> Result<Vec<PathBuf>> {
        let grid = sim.grid();
        let mut files = Vec::new();
        let rows = run.snapshots.iter().flat_map(|snap| {
            let t = snap.time;
            (0..snap.nx()).flat_map(move |i| {
                let x = grid.x(i);
                (0..snap.ny()).map(move |j| {
                    format!(
                        "{:.16e},{:.16e},{:.16e},{:.16e}",
                        t,
                        x,
                        grid.cs.nodes()[j],
                        snap.get(i, j)
                    )
                })
            })
        });
        files.push(self.write_csv("micro_snapshots.csv", "t,x,y,u", rows)?);

        #[derive(Serialize)]
        struct SnapshotSummary {
            t: f64,
            mass: f64,
            min: f64,
            max: f64,
            u_profile: Vec<f64>,
        }
        #[derive(Serialize)]
        struct MicroSummary {
            config_hash: String,
            seed: u64,
            boundary_mass_warning: bool,
            snapshots: Vec<SnapshotSummary>,
            config: RunConfig,
        }
        let summary = MicroSummary {
            config_hash: self.cfg.hash(),
            seed: self.cfg.mc.seed,
            boundary_mass_warning: run.boundary_mass_warning,
            snapshots: run
                .snapshots
                .iter()
                .map(|s| SnapshotSummary {
                    t: s.time,
                    mass: s.mass(grid),
                    min: s.min(),
                    max: s.max(),
                    u_profile: s.cross_mean_profile(&grid.cs),
                })
                .collect(),
            config: self.cfg.clone(),
        };
        files.push(self.write_json("micro_summary.json", &summary)?);
        Ok(files)
    }

    pub fn cmd_micro(&self) -> Result<Vec<PathBuf>> {
        let (run, sim) = self.micro_run()?;
        self.write_micro(&run, &sim)
    }

    // ----- mc -----

    pub fn mc_run(&self) -> Result<(McStats, CoefficientFit)> {
        let v = self.cfg.build_profile()?;
        let stats = simulate(&self.cfg.mc_config(), &v)?;
        let fit = fit_transport_coefficients(&stats)?;
        Ok((stats, fit))
    }

    fn write_mc(&self, stats: &McStats, fit: &CoefficientFit) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        let rows = (0..stats.times.len()).map(|i| {
            format!(
                "{},{},{},{},{}",
                stats.times[i], stats.mean[i], stats.var[i], stats.se_mean[i], stats.se_var[i]
            )
        });
        files.push(self.write_csv("mc_stats.csv", "t,mean,var,se_mean,se_var", rows)?);

        // Theory values from the derivation on the same configuration.
        let (sm, _, _) = self.derive_manifold()?;
        #[derive(Serialize)]
        struct McSummary {
            config_hash: String,
            seed: u64,
            fit: CoefficientFitEcho,
            theory_drift: f64,
            theory_var_rate: f64,
            drift_z: f64,
            var_rate_z: f64,
            config: RunConfig,
        }
        #[derive(Serialize)]
        struct CoefficientFitEcho {
            drift: f64,
            drift_se: f64,
            var_rate: f64,
            var_rate_se: f64,
            window: (f64, f64),
            n_points: usize,
        }
        let theory_drift = -sm.a1();
        let theory_var_rate = if sm.order >= 2 {
            2.0 * sm.a2()
        } else {
            f64::NAN
        };
        let summary = McSummary {
            config_hash: self.cfg.hash(),
            seed: self.cfg.mc.seed,
            fit: CoefficientFitEcho {
                drift: fit.drift,
                drift_se: fit.drift_se,
                var_rate: fit.var_rate,
                var_rate_se: fit.var_rate_se,
                window: fit.window,
                n_points: fit.n_points,
            },
            theory_drift,
            theory_var_rate,
            drift_z: (fit.drift - theory_drift) / fit.drift_se,
            var_rate_z: (fit.var_rate - theory_var_rate) / fit.var_rate_se,
            config: self.cfg.clone(),
        };
        files.push(self.write_json("mc_summary.json", &summary)?);

        if let Some(h) = &self.cfg.mc.histogram {
            let table = histogram(stats, h.t, h.x_bins, h.y_bins)?;
            let rows = (0..h.x_bins).flat_map(|ix| {
                let x_lo = table.x_edges[ix];
                let x_hi = table.x_edges[ix + 1];
                let density = &table.density;
                let y_edges = &table.y_edges;
                (0..h.y_bins).map(move |iy| {
                    format!(
                        "{},{},{},{},{}",
                        x_lo,
                        x_hi,
                        y_edges[iy],
                        y_edges[iy + 1],
                        density[ix][iy]
                    )
                })
            });
            files.push(self.write_csv("mc_histogram.csv", "x_lo,x_hi,y_lo,y_hi,density", rows)?);
        }
        Ok(files)
    }

    pub fn cmd_mc(&self) -> Result<Vec<PathBuf>> {
        let (stats, fit) = self.mc_run()?;
        self.write_mc(&stats, &fit)
    }

    // ----- macro -----

    /// Macroscale solution at the micro output times, started from the
    /// cross-sectional mean of the microscale initial condition.
    pub fn macro_run(&self, sm: &SlowManifold) -> Result<Vec<MacroField>> {
        let grid = self.cfg.build_grid()?;
        let ic = initial_condition(&self.cfg.build_ic()?, &grid)?;
        let u0 = MacroField::new(ic.cross_mean_profile(&grid.cs), 0.0);
        if sm.order < 2 {
            return Err(Error::Config(
                "the macroscale solver needs derive.order >= 2".into(),
            ));
        }
        let (a1, a2) = (sm.a1(), sm.a2());
        let mut times = self.cfg.micro.output_times.clone();
        if times.is_empty() {
            times.push(self.cfg.micro.t_end);
        }
        times
            .iter()
            .map(|&t| match self.cfg.macroscale.method.as_str() {
                "spectral" => solve_spectral(a1, a2, &u0, grid.length, t),
                _ => solve_fd(
                    a1,
                    a2,
                    &u0,
                    grid.length,
                    t,
                    self.cfg.macroscale.dt.expect("validated"),
                ),
            })
            .collect()
    }

    fn write_macro(&self, fields: &[MacroField]) -> Result<Vec<PathBuf>> {
        let grid = self.cfg.build_grid()?;
        let rows = fields.iter().flat_map(|f| {
            let t = f.time;
            let h = grid.length / f.values.len() as f64;
            f.values
                .iter()
                .enumerate()
                .map(move |(i, u)| format!("{},{},{}", t, i as f64 * h, u))
                .collect::<Vec<_>>()
        });
        Ok(vec![self.write_csv("macro.csv", "t,x,U", rows)?])
    }

    pub fn cmd_macro(&self) -> Result<Vec<PathBuf>> {
        let (sm, _, _) = self.derive_manifold()?;
        let fields = self.macro_run(&sm)?;
        self.write_macro(&fields)
    }

    // ----- residual -----

    fn residual_fields(
        &self,
        run: &MicroRun,
        sim: &Simulator,
        sm: &SlowManifold,
    ) -> Result<Vec<ResidualField>> {
        run.snapshots
            .iter()
            .map(|s| defect_residual(s, sm, sim))
            .collect()
    }

    fn write_residual(
        &self,
        fields: &[ResidualField],
        shape: &crate::diagnostics::ShapeReport,
    ) -> Result<Vec<PathBuf>> {
        let grid = self.cfg.build_grid()?;
        let mut files = Vec::new();
        let rows = fields.iter().flat_map(|r| {
            let t = r.time;
            let h = grid.length / r.rho.len() as f64;
            (0..r.rho.len())
                .map(move |i| format!("{},{},{},{},{}", t, i as f64 * h, r.rho[i], r.u[i], r.ut[i]))
                .collect::<Vec<_>>()
        });
        files.push(self.write_csv("residual.csv", "t,x,rho,U,Ut", rows)?);

        #[derive(Serialize)]
        struct ResidualNorms {
            t: f64,
            norm_inf: f64,
            norm_l2: f64,
            ut_norm_inf: f64,
            relative_inf: f64,
        }
        #[derive(Serialize)]
        struct ShapeEcho {
            t: f64,
            relative_deviation: f64,
            pre_emergent: bool,
        }
        #[derive(Serialize)]
        struct ResidualSummary {
            config_hash: String,
            seed: u64,
            norms: Vec<ResidualNorms>,
            shape: ShapeEcho,
            config: RunConfig,
        }
        let summary = ResidualSummary {
            config_hash: self.cfg.hash(),
            seed: self.cfg.mc.seed,
            norms: fields
                .iter()
                .map(|r| ResidualNorms {
                    t: r.time,
                    norm_inf: r.norm_inf,
                    norm_l2: r.norm_l2,
                    ut_norm_inf: r.ut_norm_inf,
                    relative_inf: r.norm_inf / r.ut_norm_inf.max(1e-300),
                })
                .collect(),
            shape: ShapeEcho {
                t: shape.time,
                relative_deviation: shape.relative_deviation,
                pre_emergent: shape.pre_emergent,
            },
            config: self.cfg.clone(),
        };
        files.push(self.write_json("residual_summary.json", &summary)?);
        Ok(files)
    }

    pub fn cmd_residual(&self) -> Result<Vec<PathBuf>> {
        if self.cfg.grid.boundary != "periodic" {
            return Err(Error::Config(
                "residual diagnostics need a periodic boundary".into(),
            ));
        }
        if self.cfg.derive.order < 2 {
            return Err(Error::Config(
                "residual diagnostics need derive.order >= 2".into(),
            ));
        }
        let (sm, _, _) = self.derive_manifold()?;
        let (run, sim) = self.micro_run()?;
        let fields = self.residual_fields(&run, &sim, &sm)?;
        let shape = shape_check(run.snapshots.last().unwrap(), &sm, sim.grid())?;
        self.write_residual(&fields, &shape)
    }

    // ----- compare -----

    fn write_compare(&self, report: &ComparisonReport) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        let rows = (0..report.times.len()).map(|i| {
            format!(
                "{},{},{}",
                report.times[i], report.l2_rel[i], report.linf_rel[i]
            )
        });
        files.push(self.write_csv("compare.csv", "t,l2_rel,linf_rel", rows)?);

        #[derive(Serialize)]
        struct CompareSummary {
            config_hash: String,
            seed: u64,
            times: Vec<f64>,
            l2_rel: Vec<f64>,
            linf_rel: Vec<f64>,
            worst_l2: f64,
            worst_linf: f64,
            config: RunConfig,
        }
        let summary = CompareSummary {
            config_hash: self.cfg.hash(),
            seed: self.cfg.mc.seed,
            times: report.times.clone(),
            l2_rel: report.l2_rel.clone(),
            linf_rel: report.linf_rel.clone(),
            worst_l2: report.worst_l2,
            worst_linf: report.worst_linf,
            config: self.cfg.clone(),
        };
        files.push(self.write_json("compare.json", &summary)?);
        Ok(files)
    }

    pub fn cmd_compare(&self) -> Result<Vec<PathBuf>> {
        if self.cfg.grid.boundary != "periodic" {
            return Err(Error::Config(
                "micro/macro comparison needs a periodic boundary".into(),
            ));
        }
        let (sm, _, _) = self.derive_manifold()?;
        let (run, sim) = self.micro_run()?;
        let macros = self.macro_run(&sm)?;
        let report = compare_micro_macro(&run.snapshots, &macros, &sim.grid().cs)?;
        self.write_compare(&report)
    }

    // ----- all -----

    /// Full pipeline: derive, micro, mc, macro, residual, compare. Partial
    /// outputs are retained on failure and the manifest records what broke.
    pub fn cmd_all(&self) -> Result<Vec<PathBuf>> {
        let mut manifest = Manifest {
            config_hash: self.cfg.hash(),
            seed: self.cfg.mc.seed,
            failed: false,
            failure: None,
            stages: Vec::new(),
        };
        let result = self.run_all(&mut manifest);
        if let Err(e) = &result {
            manifest.failed = true;
            manifest.failure = Some(e.to_string());
        }
        let manifest_path = self.write_json("MANIFEST.json", &manifest)?;
        result.map(|mut files| {
            files.push(manifest_path);
            files
        })
    }

    fn run_all(&self, manifest: &mut Manifest) -> Result<Vec<PathBuf>> {
        fn record(
            manifest: &mut Manifest,
            name: &str,
            outcome: Result<Vec<PathBuf>>,
        ) -> Result<Vec<PathBuf>> {
            match outcome {
                Ok(files) => {
                    manifest.stages.push(StageRecord {
                        name: name.into(),
                        status: "ok".into(),
                        // Names only: manifests must not depend on where the
                        // output directory lives.
                        files: files
                            .iter()
                            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into())
                            .collect(),
                        error: None,
                    });
                    Ok(files)
                }
                Err(e) => {
                    manifest.stages.push(StageRecord {
                        name: name.into(),
                        status: "failed".into(),
                        files: Vec::new(),
                        error: Some(e.to_string()),
                    });
                    Err(e)
                }
            }
        }

        let mut all_files = Vec::new();
        all_files.extend(record(manifest, "derive", self.cmd_derive())?);
        let (sm, _, _) = self.derive_manifold()?;

        let micro_and_files = self.micro_run().and_then(|(run, sim)| {
            let files = self.write_micro(&run, &sim)?;
            Ok((run, sim, files))
        });
        let (run, sim) = match micro_and_files {
            Ok((run, sim, files)) => {
                all_files.extend(record(manifest, "micro", Ok(files))?);
                (run, sim)
            }
            Err(e) => return record(manifest, "micro", Err(e)),
        };

        let mc_files = self
            .mc_run()
            .and_then(|(stats, fit)| self.write_mc(&stats, &fit));
        all_files.extend(record(manifest, "mc", mc_files)?);

        let macros = match self.macro_run(&sm) {
            Ok(m) => m,
            Err(e) => return record(manifest, "macro", Err(e)),
        };
        all_files.extend(record(manifest, "macro", self.write_macro(&macros))?);

        let residual = self.residual_fields(&run, &sim, &sm).and_then(|fields| {
            let shape = shape_check(run.snapshots.last().unwrap(), &sm, sim.grid())?;
            self.write_residual(&fields, &shape)
        });
        all_files.extend(record(manifest, "residual", residual)?);

        let compare = compare_micro_macro(&run.snapshots, &macros, &sim.grid().cs)
            .and_then(|report| self.write_compare(&report));
        all_files.extend(record(manifest, "compare", compare)?);

        Ok(all_files)
    }
}

/// Output directory resolution: explicit flag, then config, then the
/// ZAPPA_OUT environment variable, then ./zappa-out.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = &cfg.output_dir {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var("ZAPPA_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("zappa-out")
}
