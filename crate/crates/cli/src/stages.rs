//! One function per subcommand. Every stage reads from and writes under the output root.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};

use tempoflow_core::baselines::{interpolate, Interpolation};
use tempoflow_core::container::{load_container, save_container, save_field};
use tempoflow_core::evaluate::{
    compare_methods, plane_flow_curve, write_plane_flow, write_series, write_table, InputPair,
    PlaneSpec,
};
use tempoflow_core::mrsim::{
    accumulate_frames, draw_snr_db, kspace_from_container, kspace_to_container,
    select_active_coils, simulate_acquisition, simulate_coil_maps, CoilArray, CoilModel,
};
use tempoflow_core::patch::{
    extract_patch_pairs, patches_from_container, patches_to_container, PatchPair,
};
use tempoflow_core::phantom::{evaluate_phantom_pair, Axis, PhantomSpec};
use tempoflow_core::recon::{images_to_field, reconstruct_kspace, ReconOutput};
use tempoflow_core::seed::{derive, mix};
use tempoflow_core::srnet::{infer_field, train, write_loss_curve, NetworkParams};
use tempoflow_core::{load_field, Grid4D, VelocityField4D};

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn key(self) -> u64 {
        self as u64
    }
}

/// One phantom of one split, named `{split}_{index:02}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Case {
    pub split: Split,
    pub index: usize,
}

impl Case {
    pub fn name(&self) -> String {
        format!("{}_{:02}", self.split.name(), self.index)
    }

    fn keys(&self) -> [u64; 2] {
        [self.split.key(), self.index as u64]
    }
}

/// Resolved config, output root and the provenance record every output carries.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub config_sha256: String,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, out: PathBuf) -> Self {
        let config_sha256 = cfg.hash();
        Context {
            cfg,
            out,
            config_sha256,
        }
    }

    pub fn provenance_line(&self, command: &str) -> String {
        format!(
            "provenance command={command} config_sha256={} seed={} version=tempoflow-{VERSION}",
            self.config_sha256, self.cfg.seed
        )
    }

    fn provenance(&self, stage: &str) -> Value {
        json!({
            "stage": stage,
            "config_sha256": self.config_sha256,
            "seed": self.cfg.seed,
            "version": format!("tempoflow-{VERSION}"),
        })
    }

    fn meta(&self, stage: &str, extra: Value) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("provenance".into(), self.provenance(stage));
        if let Value::Object(e) = extra {
            m.extend(e);
        }
        m
    }

    fn path(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.out.clone(), |p, s| p.join(s))
    }

    fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.out.join(name);
        std::fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        Ok(d)
    }

    pub fn cases(&self, split: Split) -> Vec<Case> {
        let p = &self.cfg.phantoms;
        let (explicit, n) = match split {
            Split::Train => (&p.train, p.n_train),
            Split::Val => (&p.val, p.n_val),
            Split::Test => (&p.test, p.n_test),
        };
        let n = if explicit.is_empty() {
            n
        } else {
            explicit.len()
        };
        (0..n).map(|index| Case { split, index }).collect()
    }

    fn all_cases(&self) -> Vec<Case> {
        Split::ALL.iter().flat_map(|&s| self.cases(s)).collect()
    }

    fn seed_for(&self, label: &str, case: &Case) -> u64 {
        mix(derive(self.cfg.seed, label), &case.keys())
    }

    fn hr_grid(&self) -> Result<Grid4D> {
        Ok(self.cfg.grid.hr_grid()?)
    }

    fn phantom_spec(&self, case: &Case) -> Result<PhantomSpec> {
        let p = &self.cfg.phantoms;
        let explicit = match case.split {
            Split::Train => &p.train,
            Split::Val => &p.val,
            Split::Test => &p.test,
        };
        match explicit.get(case.index) {
            Some(spec) => Ok(*spec),
            None => Ok(p
                .sampler
                .sample(&self.hr_grid()?, self.seed_for("phantom", case))?),
        }
    }

    /// Active coils for a case; deterministic, so `recon` rebuilds what `acquire` used.
    fn coils(&self, case: &Case, grid: &Grid4D) -> Result<CoilArray> {
        let a = &self.cfg.acquisition;
        Ok(match a.coil_model {
            CoilModel::Uniform => CoilArray::uniform(grid),
            CoilModel::BiotSavart => {
                let all = simulate_coil_maps(grid, a.n_coils_total)?;
                select_active_coils(&all, a.n_coils_active, self.seed_for("coils", case))?
            }
        })
    }
}

fn load(path: &Path) -> Result<VelocityField4D> {
    load_field(path).with_context(|| format!("loading {}", path.display()))
}

pub fn phantom(ctx: &Context) -> Result<()> {
    let dir = ctx.dir("phantoms")?;
    let g = ctx.cfg.grid;
    for case in ctx.all_cases() {
        let spec = ctx.phantom_spec(&case)?;
        let (hr, lr) = evaluate_phantom_pair(&spec, g.nt_hr, g.dt_hr)?;
        let meta = ctx.meta("phantom", json!({ "case": case.name(), "phantom": spec }));
        save_field(dir.join(format!("{}_hr.f4d", case.name())), &hr, &meta)?;
        save_field(dir.join(format!("{}_lr.f4d", case.name())), &lr, &meta)?;
        log::info!("phantom {}: {} fluid voxels", case.name(), hr.fluid_count());
    }
    Ok(())
}

pub fn acquire(ctx: &Context) -> Result<()> {
    let dir = ctx.dir("acquired")?;
    for case in ctx.all_cases() {
        let hr = load(&ctx.path(&["phantoms", &format!("{}_hr.f4d", case.name())]))?;
        let coils = ctx.coils(&case, &hr.grid)?;
        let mut acq = ctx.cfg.acquisition.clone();
        acq.seed = ctx.seed_for("acquire", &case);
        let snr_db = draw_snr_db(acq.snr_db_range, ctx.seed_for("snr", &case));
        let k = simulate_acquisition(&hr, &coils, &acq, snr_db)?;
        let mut c = kspace_to_container(&k)?;
        let snr = snr_db.is_finite().then_some(snr_db);
        c.metadata.extend(ctx.meta(
            "acquire",
            json!({ "case": case.name(), "snr_db": snr, "grid": hr.grid }),
        ));
        save_container(dir.join(format!("{}.f4d", case.name())), &c)?;
        log::info!(
            "acquired {}: snr {snr:?} dB, union coverage {:.3}",
            case.name(),
            k.pattern.union_fraction()
        );
    }
    Ok(())
}

fn write_traces(path: &Path, out: &ReconOutput) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "frame,encoding,lambda,iteration,data_term,l1_term,total")?;
    for t in &out.traces {
        for h in &t.history {
            writeln!(
                f,
                "{},{},{:e},{},{:e},{:e},{:e}",
                t.frame, t.encoding, t.lambda, h.iteration, h.data_term, h.l1_term, h.total
            )?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn recon(ctx: &Context) -> Result<()> {
    let dir = ctx.dir("recon")?;
    let venc = ctx.cfg.acquisition.venc;
    for case in ctx.all_cases() {
        let name = case.name();
        let c = load_container(ctx.path(&["acquired", &format!("{name}.f4d")]))
            .with_context(|| format!("loading acquired k-space for {name}"))?;
        let k = kspace_from_container(&c)?;
        let grid: Grid4D = c.meta("grid")?;
        let mask = load(&ctx.path(&["phantoms", &format!("{name}_hr.f4d")]))?.fluid_mask;
        let coils = ctx.coils(&case, &grid)?;
        let fista = &ctx.cfg.recon.fista;
        let meta = ctx.meta("recon", json!({ "case": name, "fista": fista }));

        let k_lr = accumulate_frames(&k, 2)?;
        let out = reconstruct_kspace(&k_lr, &coils, fista)?;
        let lr = images_to_field(
            &out.images,
            venc,
            grid.with_time(grid.nt / 2, 2.0 * grid.dt),
            mask.clone(),
        )?;
        save_field(dir.join(format!("{name}_lr.f4d")), &lr, &meta)?;
        write_traces(&dir.join(format!("{name}_lr_objective.csv")), &out)?;
        log::info!("reconstructed {name} at low rate");

        if ctx.cfg.recon.reconstruct_hr {
            let out = reconstruct_kspace(&k, &coils, fista)?;
            let hr = images_to_field(&out.images, venc, grid, mask)?;
            save_field(dir.join(format!("{name}_hr.f4d")), &hr, &meta)?;
            write_traces(&dir.join(format!("{name}_hr_objective.csv")), &out)?;
            log::info!("reconstructed {name} at full rate");
        }
    }
    Ok(())
}

pub fn patches(ctx: &Context) -> Result<()> {
    let dir = ctx.dir("patches")?;
    let geom = ctx.cfg.patches.geometry;
    for split in Split::ALL {
        let cases = ctx.cases(split);
        if cases.is_empty() {
            continue;
        }
        let extraction = match split {
            Split::Train => &ctx.cfg.patches.train,
            _ => &ctx.cfg.patches.eval,
        };
        let mut pairs: Vec<PatchPair> = Vec::new();
        for case in &cases {
            let name = case.name();
            let lr = load(&ctx.path(&["recon", &format!("{name}_lr.f4d")]))?;
            let hr = load(&ctx.path(&["phantoms", &format!("{name}_hr.f4d")]))?;
            pairs.extend(extract_patch_pairs(
                &lr,
                &hr,
                &geom,
                extraction,
                ctx.seed_for("patches", case),
            )?);
        }
        let mut c = patches_to_container(&pairs)?;
        let names: Vec<String> = cases.iter().map(Case::name).collect();
        c.metadata.extend(ctx.meta(
            "patches",
            json!({ "split": split, "cases": names, "geometry": geom }),
        ));
        save_container(dir.join(format!("{}.f4d", split.name())), &c)?;
        log::info!("{} {} patches", pairs.len(), split.name());
    }
    Ok(())
}

fn load_patches(path: &Path) -> Result<Vec<PatchPair>> {
    let c = load_container(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(patches_from_container(&c)?)
}

pub fn train_stage(ctx: &Context) -> Result<()> {
    let train_set = load_patches(&ctx.path(&["patches", "train.f4d"]))?;
    let val_path = ctx.path(&["patches", "val.f4d"]);
    let val_set = if val_path.exists() {
        load_patches(&val_path)?
    } else {
        Vec::new()
    };
    let cfg = &ctx.cfg.training;
    let outcome = train(
        &train_set,
        &val_set,
        cfg,
        derive(ctx.cfg.seed, "train"),
        None,
    )?;
    let mut c = outcome.best.to_container()?;
    c.metadata.extend(ctx.meta(
        "train",
        json!({ "training": cfg, "best_epoch": outcome.best_epoch, "geometry": ctx.cfg.patches.geometry }),
    ));
    save_container(ctx.out.join("model.f4d"), &c)?;
    let reports = ctx.dir("reports")?;
    write_loss_curve(reports.join("loss_curve.csv"), &outcome.curve)?;
    log::info!(
        "trained {} epochs, best epoch {}",
        outcome.curve.len(),
        outcome.best_epoch
    );
    Ok(())
}

pub fn infer(ctx: &Context, model: Option<&Path>) -> Result<()> {
    let model_path = model
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out.join("model.f4d"));
    let c =
        load_container(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let params = NetworkParams::<f32>::from_container(&c)?;
    let dir = ctx.dir("sr")?;
    for case in ctx.cases(Split::Test) {
        let name = case.name();
        let lr = load(&ctx.path(&["recon", &format!("{name}_lr.f4d")]))?;
        let sr = infer_field(&params, &lr, &ctx.cfg.patches.geometry)?;
        save_field(
            dir.join(format!("{name}.f4d")),
            &sr,
            &ctx.meta("infer", json!({ "case": name })),
        )?;
    }
    Ok(())
}

pub fn baseline(ctx: &Context, methods: &[Interpolation]) -> Result<()> {
    let dir = ctx.dir("baseline")?;
    for case in ctx.cases(Split::Test) {
        let name = case.name();
        let lr = load(&ctx.path(&["recon", &format!("{name}_lr.f4d")]))?;
        for &m in methods {
            let up = interpolate(&lr, m, 2)?;
            let meta = ctx.meta("baseline", json!({ "case": name, "method": m.name() }));
            save_field(dir.join(format!("{name}_{}.f4d", m.name())), &up, &meta)?;
        }
    }
    Ok(())
}

/// Slab across the middle of the flow axis: the tube axis, or x for a vortex.
fn auto_plane(spec: &PhantomSpec, grid: &Grid4D, thickness: usize) -> PlaneSpec {
    let axis = match spec {
        PhantomSpec::Tube(t) => t.tube_axis,
        PhantomSpec::Vortex(_) => Axis::X,
    };
    let n = grid.spatial_dims()[axis.index()];
    let thickness = thickness.clamp(1, n);
    PlaneSpec {
        axis,
        index: (n - thickness) / 2,
        thickness,
    }
}

pub fn evaluate(ctx: &Context, sr_override: Option<&Path>) -> Result<()> {
    let cases = ctx.cases(Split::Test);
    if sr_override.is_some() && cases.len() != 1 {
        bail!(
            "--sr needs exactly one test phantom, config has {}",
            cases.len()
        );
    }
    for case in cases {
        let name = case.name();
        let truth_path = ctx.path(&["phantoms", &format!("{name}_hr.f4d")]);
        let truth = load(&truth_path)?;
        let lr_truth = load(&ctx.path(&["phantoms", &format!("{name}_lr.f4d")]))?;
        let lr_input = load(&ctx.path(&["recon", &format!("{name}_lr.f4d")]))?;
        let sr_path = sr_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| ctx.path(&["sr", &format!("{name}.f4d")]));
        let mut fields = vec![("sr".to_string(), load(&sr_path)?)];
        for m in [Interpolation::Linear, Interpolation::Sinc] {
            let p = ctx.path(&["baseline", &format!("{name}_{}.f4d", m.name())]);
            if p.exists() {
                fields.push((m.name().to_string(), load(&p)?));
            }
        }
        for (method, f) in &fields {
            if f.grid != truth.grid {
                bail!(
                    "{method} grid {:?} does not match truth grid {:?}",
                    f.grid,
                    truth.grid
                );
            }
        }
        let methods: Vec<(&str, &VelocityField4D)> =
            fields.iter().map(|(n, f)| (n.as_str(), f)).collect();
        let report = compare_methods(
            &truth,
            &methods,
            2,
            Some(InputPair {
                input: &lr_input,
                truth: &lr_truth,
            }),
        )?;

        let dir = ctx.dir(&format!("reports/{name}"))?;
        write_table(dir.join("table2.csv"), &report)?;
        write_series(dir.join("kr2_series.csv"), &report)?;

        let plane = match ctx.cfg.evaluation.plane {
            Some(p) => p,
            None => {
                let spec: PhantomSpec = load_container(&truth_path)?.meta("phantom")?;
                auto_plane(&spec, &truth.grid, ctx.cfg.evaluation.plane_thickness)
            }
        };
        let mut curves = vec![(
            "truth",
            plane_flow_curve(&truth, &truth.fluid_mask, &plane)?,
        )];
        for (n, f) in &methods {
            curves.push((n, plane_flow_curve(f, &truth.fluid_mask, &plane)?));
        }
        write_plane_flow(dir.join("plane_flow.csv"), &curves)?;
        let mut f = std::fs::File::create(dir.join("provenance.json"))?;
        serde_json::to_writer_pretty(
            &mut f,
            &ctx.meta(
                "evaluate",
                json!({
                    "case": name,
                    "plane": plane,
                    "regions": {
                        "fluid": "all fluid voxels, boundary included",
                        "boundary": "fluid voxels with a nonfluid six-neighbour or on the volume edge",
                        "nonfluid": "complement of the fluid mask",
                    },
                }),
            ),
        )?;
        writeln!(f)?;
        log::info!("evaluated {name}");
    }
    Ok(())
}

pub fn pipeline(ctx: &Context) -> Result<()> {
    phantom(ctx)?;
    acquire(ctx)?;
    recon(ctx)?;
    patches(ctx)?;
    train_stage(ctx)?;
    infer(ctx, None)?;
    baseline(ctx, &[Interpolation::Linear, Interpolation::Sinc])?;
    evaluate(ctx, None)
}
