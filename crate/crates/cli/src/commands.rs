use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use msff_core::eval::{
    draw_overlay, evaluate_checkpoint, plot_msff_sweep, plot_pck_curves, plot_spread_bins, predict as predict_hands,
    run_ablation, write_ablation_csv, write_json, write_pck_csv, Variant,
};
use msff_core::hands::prepare_hands;
use msff_core::stage1::{HandDetector, HandRegion, WholeImageDetector};
use msff_core::synth::{generate_dataset, load_dataset, read_png};
use msff_core::train::{load_checkpoint, save_checkpoint, Checkpoint, LogRow, TrainState, Trainer};
use msff_core::{Error, Image, Joints, Result};
use serde::Serialize;

use crate::config::{load_config, specifies_model, RunConfig};
use crate::ConfigArgs;

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LOG_FILE: &str = "log.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PCK_FILE: &str = "pck.csv";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load(args: &ConfigArgs) -> Result<RunConfig> {
    load_config(args.config.as_deref(), &args.overrides)
}

pub fn gen_data(n: usize, seed: u64, out: &Path, args: &ConfigArgs) -> Result<()> {
    let config = load(args)?;
    let manifest = generate_dataset(n, seed, out, &config.generator)?;
    config.write_echo(out)?;
    let hands: usize = manifest.samples.iter().map(|s| s.hands.len()).sum();
    println!("wrote {n} images with {hands} hands to {}", out.display());
    Ok(())
}

struct LogWriter {
    path: std::path::PathBuf,
    file: BufWriter<File>,
}

impl LogWriter {
    /// Starts a fresh log holding `history` so far.
    fn create(path: &Path, stages: usize, history: &[LogRow]) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut file = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(file, "{}", LogRow::csv_header(stages)).map_err(io)?;
        for row in history {
            writeln!(file, "{}", row.csv_row()).map_err(io)?;
        }
        file.flush().map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    fn append(&mut self, row: &LogRow) -> Result<()> {
        let io = |e| Error::io(&self.path, e);
        writeln!(self.file, "{}", row.csv_row()).map_err(io)?;
        self.file.flush().map_err(io)
    }
}

pub fn train(data: &Path, out: &Path, resume: Option<&Path>, args: &ConfigArgs) -> Result<()> {
    let config = load(args)?;
    let dataset = load_dataset(data)?;
    create_dir(out)?;
    config.write_echo(out)?;
    let hands = prepare_hands(&dataset.samples, &config.model, config.train.margin, config.train.sigma)?;
    log::info!("{} images, {} hands", dataset.len(), hands.len());
    let state = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            ckpt.ensure_model(&config.model)?;
            log::info!("resuming from step {}", ckpt.state.step);
            ckpt.state
        }
        None => TrainState::new(&config.model, &config.train)?,
    };
    let mut trainer = Trainer::resume(&hands, config.model.clone(), config.train.clone(), state)?;
    let mut log = LogWriter::create(&out.join(LOG_FILE), config.model.num_msff, &trainer.state().history)?;
    let checkpoint = |state: &TrainState| Checkpoint {
        model: config.model.clone(),
        train: config.train.clone(),
        state: state.clone(),
    };
    let total = trainer.total_steps();
    let every = config.train.checkpoint_every;
    let outcome = trainer.run(|state| {
        let row = state.history.last().expect("a step was taken");
        log.append(row)?;
        if state.step % 25 == 0 || state.step == total {
            log::info!(
                "step {}/{total} loss {:.5} error {:.3}",
                state.step,
                row.total_loss,
                row.mean_error
            );
        }
        if every > 0 && state.step % every == 0 {
            save_checkpoint(
                &checkpoint(state),
                &out.join(format!("checkpoint-{:06}.ckpt", state.step)),
            )?;
        }
        Ok(())
    });
    if let Err(e @ Error::Divergence { .. }) = outcome {
        let dump = out.join("diverged.ckpt");
        save_checkpoint(&checkpoint(trainer.state()), &dump)?;
        log::error!("last good state written to {}", dump.display());
        return Err(e);
    }
    outcome?;
    save_checkpoint(&checkpoint(trainer.state()), &out.join(CHECKPOINT_FILE))?;
    let last = trainer.state().history.last();
    println!(
        "trained {} steps; final loss {}",
        trainer.state().step,
        last.map_or("n/a".into(), |r| format!("{:.6}", r.total_loss))
    );
    Ok(())
}

pub fn eval(data: &Path, checkpoint: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let mut config = load(args)?;
    let ckpt = load_checkpoint(checkpoint)?;
    if specifies_model(args.config.as_deref(), &args.overrides)? {
        ckpt.ensure_model(&config.model)?;
    }
    config.model = ckpt.model.clone();
    config.train = ckpt.train.clone();
    let dataset = load_dataset(data)?;
    create_dir(out)?;
    config.write_echo(out)?;
    let report = evaluate_checkpoint(&dataset.samples, &ckpt, &config.model, &config.eval)?;
    write_json(&report, &out.join(REPORT_FILE))?;
    write_pck_csv(&report.pck_curve, &out.join(PCK_FILE))?;
    plot_pck_curves(&[("model".into(), report.pck_curve.clone())], &out.join("pck.png"))?;
    plot_spread_bins(&report.spread_bins, &out.join("spread.png"))?;
    for p in &report.pck_curve {
        println!("PCK@{:.1} = {:.4}", p.tau, p.pck);
    }
    Ok(())
}

/// `x,y,w,h` on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionArg(pub HandRegion);

impl FromStr for RegionArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match v[..] {
            [x, y, w, h] => Ok(Self(HandRegion::new(x, y, w, h))),
            _ => Err(format!("expected X,Y,W,H, got `{s}`")),
        }
    }
}

struct FixedRegions(Vec<HandRegion>);

impl HandDetector for FixedRegions {
    fn detect(&self, _image: &Image) -> Result<Vec<HandRegion>> {
        Ok(self.0.clone())
    }
}

#[derive(Serialize)]
struct PredictedHand {
    region: HandRegion,
    joints: Joints,
}

pub fn predict(image: &Path, checkpoint: &Path, out: &Path, regions: &[RegionArg]) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let pixels = read_png(image)?;
    let detector: Box<dyn HandDetector> = if regions.is_empty() {
        Box::new(WholeImageDetector)
    } else {
        Box::new(FixedRegions(regions.iter().map(|r| r.0).collect()))
    };
    let hands = predict_hands(&pixels, detector.as_ref(), &ckpt.state.params, &ckpt.model)?;
    create_dir(out)?;
    RunConfig {
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
        ..RunConfig::default()
    }
    .write_echo(out)?;
    let joints: Vec<Joints> = hands.iter().map(|h| h.joints).collect();
    draw_overlay(&pixels, &joints, &out.join("overlay.png"))?;
    let listed: Vec<PredictedHand> = hands
        .iter()
        .map(|h| PredictedHand {
            region: h.region,
            joints: h.joints,
        })
        .collect();
    write_json(&listed, &out.join("joints.json"))?;
    println!("{} hand(s) written to {}", listed.len(), out.display());
    Ok(())
}

pub fn ablate(data: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let config = load(args)?;
    let dataset = load_dataset(data)?;
    create_dir(out)?;
    config.write_echo(out)?;
    let report = run_ablation(
        &dataset.samples,
        &config.model,
        &config.train,
        &config.ablation,
        &config.eval,
    )?;
    write_json(&report, &out.join(REPORT_FILE))?;
    write_ablation_csv(&report, &out.join("ablation.csv"))?;
    let completed: Vec<_> = report
        .entries
        .iter()
        .filter_map(|e| e.report.as_ref().map(|r| (e, r)))
        .collect();
    if let Some((_, first)) = completed.first() {
        write_pck_csv(&first.pck_curve, &out.join(PCK_FILE))?;
        plot_spread_bins(&first.spread_bins, &out.join("spread.png"))?;
    }
    let curves: Vec<_> = completed
        .iter()
        .map(|(e, r)| (e.variant.clone(), r.pck_curve.clone()))
        .collect();
    plot_pck_curves(&curves, &out.join("pck.png"))?;
    let sweep: Vec<(usize, f64)> = config
        .ablation
        .variants
        .iter()
        .zip(&report.entries)
        .filter_map(|(v, e)| match (v, &e.report) {
            (Variant::Msff(n), Some(r)) => r.pck_at(config.eval.reference_tau).map(|p| (*n, p)),
            _ => None,
        })
        .collect();
    plot_msff_sweep(&sweep, &out.join("msff_sweep.png"))?;
    for e in &report.entries {
        match (&e.report, &e.error) {
            (Some(r), _) => println!(
                "{:<10} params {:>8}  PCK@{} {:.4}  error {:.2}px",
                e.variant,
                e.parameter_count,
                config.eval.reference_tau,
                r.pck_at(config.eval.reference_tau).unwrap_or(f64::NAN),
                r.mean_error_px
            ),
            (None, err) => println!("{:<10} failed: {}", e.variant, err.as_deref().unwrap_or("unknown")),
        }
    }
    Ok(())
}
