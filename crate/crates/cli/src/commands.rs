use std::path::{Path, PathBuf};

use irmrf::autologistic::AutoParams;
use irmrf::bbox::BoundingBox;
use irmrf::bgsub::{fuse_and, sequence_masks};
use irmrf::dataset::{load_frames, write_dataset, Frame};
use irmrf::detect::{self, build_roc, components_from_mask, evaluate_frame, merge_boxes, EvalFrame, ThresholdLadder};
use irmrf::error::Error;
use irmrf::icm::{infer_frame, ClassGaussian, GaussianParams, IcmOptions, ModelVariant, RatioMap, VariantTag};
use irmrf::io::{write_detections, DetectionRow, KeyValues};
use irmrf::par::Execution;
use irmrf::sar::{ClassSarModel, SarParams};
use irmrf::{synth, train as fit};

use crate::config::{RunConfig, Scene};
use crate::Failure;

pub const TARGET_SAR: &str = "target_sar.txt";
pub const BACKGROUND_SAR: &str = "background_sar.txt";
pub const PRIOR_AUTO: &str = "prior_auto.txt";
pub const ABLATION: &str = "ablation.txt";
pub const RUN_MANIFEST: &str = "run.txt";

fn mkdir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn require(path: PathBuf) -> Result<PathBuf, Failure> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path).into())
    }
}

fn warn(kind: &str, message: &str) {
    eprintln!("warning kind={kind} message={message}");
}

/// Inputs, config hash and seed, written beside the outputs.
fn write_run(out: &Path, command: &str, cfg: &RunConfig, inputs: &[&Path]) -> Result<(), Failure> {
    let mut kv = KeyValues::new();
    kv.set("command", command)
        .set("version", env!("CARGO_PKG_VERSION"))
        .set("seed", cfg.seed)
        .set("config_sha256", cfg.hash());
    for (i, p) in inputs.iter().enumerate() {
        kv.set(&format!("input_{i}"), p.display());
    }
    let config = cfg.to_kv();
    for k in config.keys() {
        kv.set(&format!("config.{k}"), config.get(k).unwrap_or_default());
    }
    kv.write(out.join(RUN_MANIFEST))?;
    Ok(())
}

fn load_nonempty(manifest: &Path) -> Result<Vec<Frame>, Failure> {
    let frames = load_frames(require(manifest.to_path_buf())?)?;
    if frames.is_empty() {
        return Err(Error::EmptyInput("manifest lists no frames").into());
    }
    Ok(frames)
}

fn write_models(dir: &Path, target: &SarParams, background: &SarParams, prior: &AutoParams) -> Result<(), Failure> {
    mkdir(dir)?;
    target.write(dir.join(TARGET_SAR))?;
    background.write(dir.join(BACKGROUND_SAR))?;
    prior.write(dir.join(PRIOR_AUTO))?;
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let (frames, target, background) = match cfg.scene {
        Scene::Planted => (
            synth::planted_blobs(cfg.frames, cfg.boxes, synth::desk_background(), synth::desk_target(), cfg.seed)?,
            synth::desk_target(),
            synth::desk_background(),
        ),
        Scene::Poles => (
            synth::pole_distractors(
                cfg.frames,
                cfg.boxes,
                3,
                3,
                synth::pole_background(),
                synth::pole_target(),
                synth::pole_look(),
                cfg.seed,
            )?,
            synth::pole_target(),
            synth::pole_background(),
        ),
        Scene::Sequence | Scene::CleanSequence => (
            synth::moving_target_sequence(
                cfg.frames,
                cfg.scene == Scene::Sequence,
                synth::desk_background(),
                synth::desk_target(),
                cfg.seed,
            )?,
            synth::desk_target(),
            synth::desk_background(),
        ),
    };
    let manifest = write_dataset(out, &frames)?;
    write_models(&out.join("models"), &target, &background, &synth::fixture_prior())?;
    write_run(out, "synth", cfg, &[])?;
    println!("synth scene={} frames={} manifest={}", cfg.scene.as_str(), frames.len(), manifest.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<(), Failure> {
    let frames = load_nonempty(manifest)?;
    let model = fit::train(&frames, cfg.seed)?;
    write_models(out, &model.sar.target, &model.sar.background, &model.prior.params)?;
    let mut kv = KeyValues::new();
    kv.set("iid_target_mean", model.iid.target.mean)
        .set("iid_target_var", model.iid.target.var)
        .set("iid_background_mean", model.iid.background.mean)
        .set("iid_background_var", model.iid.background.var)
        .set("target_rate", model.target_rate);
    kv.write(out.join(ABLATION))?;
    write_run(out, "train", cfg, &[manifest])?;
    let p = model.prior.params;
    if !model.prior.converged {
        warn("prior_fit", &format!("pseudo-likelihood fit stopped after {} iterations", model.prior.iterations));
    }
    if p.nu.abs() > 30.0 || p.gamma.abs() > 30.0 {
        warn(
            "prior_fit",
            &format!("label prior nu={} gamma={} is near-deterministic; the truth labels are close to separable", p.nu, p.gamma),
        );
    }
    println!(
        "train frames={} patches={} nu={} gamma={}",
        frames.len(),
        model.background_patches.len(),
        p.nu,
        p.gamma
    );
    Ok(())
}

fn load_variant(cfg: &RunConfig) -> Result<ModelVariant, Failure> {
    let dir = cfg
        .models
        .as_ref()
        .ok_or_else(|| Failure::config("no model directory given (use --models or `models =`)".into()))?;
    let sar = || -> Result<ClassSarModel, Failure> {
        let t = SarParams::read(require(dir.join(TARGET_SAR))?)?;
        let b = SarParams::read(require(dir.join(BACKGROUND_SAR))?)?;
        Ok(ClassSarModel::new(t, b)?)
    };
    let prior = || -> Result<AutoParams, Failure> { Ok(AutoParams::read(require(dir.join(PRIOR_AUTO))?)?) };
    let ablation = || -> Result<KeyValues, Failure> { Ok(KeyValues::read(require(dir.join(ABLATION))?)?) };
    Ok(match cfg.variant {
        VariantTag::SarAuto => ModelVariant::sar_auto(sar()?, prior()?),
        VariantTag::SarI => ModelVariant::sar_i(sar()?, ablation()?.f64("target_rate")?)?,
        VariantTag::IAuto => {
            let kv = ablation()?;
            let iid = ClassGaussian {
                target: GaussianParams::new(kv.f64("iid_target_mean")?, kv.f64("iid_target_var")?)?,
                background: GaussianParams::new(kv.f64("iid_background_mean")?, kv.f64("iid_background_var")?)?,
            };
            ModelVariant::i_auto(iid, prior()?)
        }
    })
}

struct Inferred {
    labels: irmrf::grid::LabelGrid,
    rho: RatioMap,
}

/// ICM and ratio maps for every frame; frames run in parallel.
fn infer_all(cfg: &RunConfig, variant: &ModelVariant, frames: &[Frame]) -> Result<Vec<Inferred>, Failure> {
    let opts = IcmOptions {
        max_sweeps: cfg.max_sweeps,
        execution: Execution::Sequential,
    };
    let results = Execution::default().map(0..frames.len(), |i| infer_frame(variant, &frames[i].image, &opts));
    let mut out = Vec::with_capacity(frames.len());
    for (i, r) in results.into_iter().enumerate() {
        let (icm, rho) = r?;
        if !icm.converged {
            warn("icm", &format!("frame {i} still changing after {} sweeps", icm.sweeps));
        }
        out.push(Inferred { labels: icm.labels, rho });
    }
    Ok(out)
}

fn map_path(dir: &Path, i: usize) -> PathBuf {
    dir.join("rho").join(format!("rho_{i:04}.bin"))
}

fn roc(cfg: &RunConfig, frames: &[Frame], maps: &[&RatioMap], out: &Path) -> Result<detect::EvalReport, Failure> {
    let ladder = ThresholdLadder::quantiles(maps.iter().flat_map(|m| m.log_rho()), cfg.ladder)?;
    let eval: Vec<EvalFrame> = frames
        .iter()
        .zip(maps)
        .map(|(f, m)| EvalFrame { rho: m, truth: &f.truth, mask: None })
        .collect();
    let report = build_roc(&eval, &ladder, cfg.min_area, Execution::default())?;
    report.write_csv(out.join("roc.csv"))?;
    if !report.is_monotone() {
        warn("roc", "hit and false-alarm counts are not monotone in delta");
    }
    Ok(report)
}

fn print_roc(command: &str, n: usize, report: &detect::EvalReport) {
    let best = report
        .hit_rate_at_fa(1.0)
        .map_or("none".to_string(), |h| format!("{h}"));
    println!("{command} frames={n} points={} hit_rate_at_fa1={best}", report.points.len());
}

pub fn detect(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<(), Failure> {
    let frames = load_nonempty(manifest)?;
    let variant = load_variant(cfg)?;
    let inferred = infer_all(cfg, &variant, &frames)?;
    mkdir(&out.join("rho"))?;
    let mut rows = Vec::new();
    for (i, r) in inferred.iter().enumerate() {
        r.rho.write(map_path(out, i))?;
        let boxes = merge_boxes(&detect::extract_components(&r.rho, cfg.detect_delta, cfg.min_area));
        rows.extend(boxes.into_iter().map(|bbox| DetectionRow { frame_id: i, bbox }));
    }
    write_detections(out.join("detections.csv"), &rows)?;
    let maps: Vec<&RatioMap> = inferred.iter().map(|r| &r.rho).collect();
    let report = roc(cfg, &frames, &maps, out)?;
    write_run(out, "detect", cfg, &[manifest])?;
    print_roc("detect", frames.len(), &report);
    Ok(())
}

pub fn eval(cfg: &RunConfig, manifest: &Path, maps_dir: &Path, out: &Path) -> Result<(), Failure> {
    let frames = load_nonempty(manifest)?;
    let mut maps = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let m = RatioMap::read(require(map_path(maps_dir, i))?)?;
        f.image.dims().expect_same(m.dims())?;
        maps.push(m);
    }
    mkdir(out)?;
    let refs: Vec<&RatioMap> = maps.iter().collect();
    let report = roc(cfg, &frames, &refs, out)?;
    write_run(out, "eval", cfg, &[manifest, maps_dir])?;
    print_roc("eval", frames.len(), &report);
    Ok(())
}

#[derive(Default)]
struct Tally {
    hits: usize,
    false_alarms: usize,
}

impl Tally {
    fn add(&mut self, dets: &[BoundingBox], truth: &[BoundingBox]) {
        let e = evaluate_frame(dets, truth);
        self.hits += e.hits;
        self.false_alarms += e.false_alarms;
    }
}

/// Frame 0 has no background history, so fusion is scored from frame 1 on.
pub fn fuse(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<(), Failure> {
    let frames = load_nonempty(manifest)?;
    if frames.len() < 2 {
        return Err(Failure {
            kind: "too_few_frames",
            message: format!("fusion needs at least 2 frames, manifest has {}", frames.len()),
        });
    }
    let variant = load_variant(cfg)?;
    let inferred = infer_all(cfg, &variant, &frames)?;
    let images: Vec<_> = frames.iter().map(|f| f.image.clone()).collect();
    let masks = sequence_masks(&images, cfg.bg_t, cfg.bg_sigma, cfg.bg_tau, Execution::default())?;
    mkdir(out)?;
    let (mut before, mut after) = (Tally::default(), Tally::default());
    let (mut rows_before, mut rows_after) = (Vec::new(), Vec::new());
    let mut truths = 0;
    for (i, ((f, r), mask)) in frames.iter().zip(&inferred).zip(&masks).enumerate().skip(1) {
        let pre = merge_boxes(&components_from_mask(&r.labels, Some(&r.rho), cfg.min_area)?);
        let fused = fuse_and(&r.labels, mask)?;
        let post = merge_boxes(&components_from_mask(&fused, Some(&r.rho), cfg.min_area)?);
        before.add(&pre, &f.truth);
        after.add(&post, &f.truth);
        truths += f.truth.len();
        rows_before.extend(pre.into_iter().map(|bbox| DetectionRow { frame_id: i, bbox }));
        rows_after.extend(post.into_iter().map(|bbox| DetectionRow { frame_id: i, bbox }));
    }
    write_detections(out.join("detections_before.csv"), &rows_before)?;
    write_detections(out.join("detections_fused.csv"), &rows_after)?;
    let n = (frames.len() - 1) as f64;
    let pct = |t: &Tally| if truths == 0 { 100.0 } else { 100.0 * t.hits as f64 / truths as f64 };
    let table = format!(
        "variant,frames,truths,hit_before,fa_before,hit_after,fa_after\n{},{},{},{},{},{},{}\n",
        cfg.variant,
        frames.len() - 1,
        truths,
        pct(&before),
        before.false_alarms as f64 / n,
        pct(&after),
        after.false_alarms as f64 / n
    );
    write_text(&out.join("fuse_table.csv"), &table)?;
    write_run(out, "fuse", cfg, &[manifest])?;
    println!(
        "fuse frames={} HIT {:.1}% -> {:.1}%  FA {:.2} -> {:.2}",
        frames.len() - 1,
        pct(&before),
        pct(&after),
        before.false_alarms as f64 / n,
        after.false_alarms as f64 / n
    );
    Ok(())
}
