use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use proq::maze::{generate_dataset, CellIdx, MazeLayout, Style};
use proq::nn::checkpoint::Checkpoint;
use proq::orchestrator::{emit_maps, evaluate_checkpoint, plan_dump, EvalOptions, Model, TrainConfig, Trainer};

#[derive(Parser)]
#[command(name = "proq", version, about = "Keypoint planning over a learned quasimetric in point-mass mazes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an offline dataset.
    Gen {
        #[arg(long)]
        layout: String,
        #[arg(long, default_value = "navigate")]
        style: Style,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the transitions as JSON lines next to the binary file.
        #[arg(long)]
        jsonl: bool,
    },
    /// Train from a config file; writes checkpoints and a run report.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop success rate of a checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        layout: String,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Episode budget; defaults by layout size.
        #[arg(long)]
        horizon: Option<usize>,
        /// Take the policy mean instead of sampling actions.
        #[arg(long)]
        deterministic: bool,
        /// Plan over the barrier-free keypoint set.
        #[arg(long)]
        ablation: bool,
    },
    /// Classifier heatmap, keypoints and an optional plan.
    Map {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        layout: String,
        #[arg(long, default_value_t = 200)]
        res: usize,
        #[arg(long)]
        out: PathBuf,
        /// Start cell as `row,col`; needs --goal.
        #[arg(long, value_parser = parse_cell, requires = "goal")]
        start: Option<CellIdx>,
        #[arg(long, value_parser = parse_cell, requires = "start")]
        goal: Option<CellIdx>,
    },
}

fn parse_cell(s: &str) -> Result<CellIdx, String> {
    let (r, c) = s.split_once(',').ok_or("expected row,col")?;
    let r = r.trim().parse().map_err(|_| format!("bad row {r:?}"))?;
    let c = c.trim().parse().map_err(|_| format!("bad column {c:?}"))?;
    Ok((r, c))
}

fn load_checkpoint(path: &PathBuf, layout: &MazeLayout) -> Result<(Model, TrainConfig)> {
    let ck = Checkpoint::load(path).with_context(|| format!("reading {}", path.display()))?;
    let (model, config) = Model::from_checkpoint(&ck)?;
    if config.layout != layout.name {
        bail!("checkpoint was trained on {}, not {}", config.layout, layout.name);
    }
    Ok((model, config))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen { layout, style, n, seed, out, jsonl } => {
            let layout = MazeLayout::load(&layout)?;
            let ds = generate_dataset(&layout, style, n, seed)?;
            ds.save(&out).with_context(|| format!("writing {}", out.display()))?;
            if jsonl {
                let path = out.with_extension("jsonl");
                let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
                ds.write_jsonl(&mut f)?;
            }
            println!(
                "{} transitions, {} trajectories, {:.1}% of free cells visited",
                ds.len(),
                ds.num_trajectories(),
                100.0 * ds.coverage(&layout)
            );
        }
        Command::Train { config, out } => {
            let config = match config {
                Some(p) => TrainConfig::load(&p).with_context(|| format!("reading {}", p.display()))?,
                None => TrainConfig::desk(),
            };
            fs::create_dir_all(&out)?;
            let layout = MazeLayout::load(&config.layout)?;
            let dataset = proq::orchestrator::train::load_dataset(&config, &layout)?;
            fs::write(out.join("config.txt"), config.to_text())?;
            let mut trainer = Trainer::new(config, dataset)?;
            let outcome = trainer.run(|t| {
                t.model.to_checkpoint(&t.config).save(out.join(format!("step_{:08}.ckpt", t.model.step)))?;
                eprintln!("step {} checkpointed", t.model.step);
                Ok(())
            });
            fs::write(out.join("report.json"), trainer.report.to_json()?)?;
            outcome?;
            trainer.model.to_checkpoint(&trainer.config).save(out.join("final.ckpt"))?;
            if let Some(last) = trainer.report.logs.last() {
                eprintln!(
                    "done: {} steps in {:.0}s, d(s,s') {:.3}, psi+ {:.3}",
                    last.step, trainer.report.wall_clock_secs, last.mean_d_successor, last.mean_psi_positive
                );
            }
        }
        Command::Eval { ckpt, layout, episodes, seed, horizon, deterministic, ablation } => {
            let layout = MazeLayout::load(&layout)?;
            let ck = Checkpoint::load(&ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
            let mut options = EvalOptions::for_layout(&layout, episodes, seed);
            options.deterministic = deterministic;
            options.ablation_keypoints = ablation;
            if let Some(h) = horizon {
                options.horizon = h;
            }
            let result = evaluate_checkpoint(&ck, &layout, &options)?;
            println!("{}", serde_json::to_string_pretty(&result.summary)?);
        }
        Command::Map { ckpt, layout, res, out, start, goal } => {
            let layout = MazeLayout::load(&layout)?;
            let (model, _) = load_checkpoint(&ckpt, &layout)?;
            fs::create_dir_all(&out)?;
            let plan = match (start, goal) {
                (Some(s), Some(g)) => Some(plan_dump(&model, &layout, s, g)?),
                _ => None,
            };
            let map = emit_maps(&model, &layout, res, plan.as_ref())?;
            fs::write(out.join("psi.ppm"), &map.ppm)?;
            fs::write(out.join("psi.csv"), &map.csv)?;
            let mut kps = Vec::new();
            model.kps.write_csv(&model.psi.net, &mut kps)?;
            fs::write(out.join("keypoints.csv"), kps)?;
            if let Some(plan) = plan {
                fs::write(out.join("plan.json"), serde_json::to_string_pretty(&plan)?)?;
            }
            println!("wrote {}x{} map to {}", map.width, map.height, out.display());
        }
    }
    Ok(())
}
