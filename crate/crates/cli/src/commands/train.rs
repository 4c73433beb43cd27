use std::fs::File;
use std::io::{BufWriter, Write};

use archstyle_core::kv::KvMap;
use archstyle_core::losses::{LossReport, LossWeights};
use archstyle_net::{checkpoint, train, OptimizerState, TrainOptions, TranslatorBundle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::app::{Branch, Global, TrainArgs};
use crate::error::{CliError, Context, Result};
use crate::pipeline::load_corpus;
use crate::settings::Settings;

pub const LOSS_LOG_COLUMNS: [&str; 11] = [
    "iteration",
    "x",
    "c",
    "s",
    "z",
    "cycle",
    "adv",
    "gd",
    "kl",
    "total",
    "d_loss",
];

fn log_row(it: usize, r: &LossReport) -> String {
    let mut cols = vec![it.to_string()];
    cols.extend(r.terms.as_array().iter().map(|v| v.to_string()));
    cols.push(r.total.to_string());
    cols.push(r.discriminator.map_or(String::new(), |d| d.to_string()));
    cols.join(",")
}

pub fn run(a: &TrainArgs, g: &Global, s: &Settings) -> Result<()> {
    let branch = a.branch.name();
    let d1 = load_corpus(&a.domain1, 2)?;
    let d2 = load_corpus(&a.domain2, 2)?;
    let base = match a.branch {
        Branch::Fg => LossWeights::foreground(),
        Branch::Bg => LossWeights::background(),
    };
    let weights = s.loss_weights(base)?;
    let iterations = a.iterations.map_or_else(|| s.usize_or("iterations", 1000), Ok)?;
    let batch_size = s.usize_or("batch_size", 2)?;
    let every = s.usize_or("checkpoint_every", 1000)?;
    let seed = s.kv().get_u64("seed").usage()?.unwrap_or(0);

    let (mut bundle, start) = match &a.resume {
        Some(p) => {
            crate::error::require_file(p, "resume checkpoint")?;
            let (b, meta) = checkpoint::load(p).stage("load checkpoint")?;
            let it = meta.get_usize("iteration").stage("load checkpoint")?.unwrap_or(0);
            (b, it)
        }
        None => {
            let mut cfg = s.net_config()?;
            if let Some(size) = g.size {
                cfg.image_size = size;
            }
            (TranslatorBundle::new(cfg).usage()?, 0)
        }
    };
    let size = g.size.unwrap_or(bundle.config.image_size);
    bundle.config.check_input(size, size).usage()?;
    if bundle.optimizer.is_none() {
        bundle.optimizer = Some(OptimizerState {
            params: s.adam()?,
            ..Default::default()
        });
    }
    log::info!(
        "training {branch} branch: {} parameters, {} + {} images, {iterations} iterations at {size}px",
        bundle.param_count(),
        d1.len(),
        d2.len()
    );

    std::fs::create_dir_all(&g.out_dir).stage("create output directory")?;
    let log_path = g.out_dir.join("loss_log.csv");
    let mut log = BufWriter::new(File::create(&log_path).stage("write loss log")?);
    writeln!(log, "{}", LOSS_LOG_COLUMNS.join(",")).stage("write loss log")?;

    // Offsetting by the start iteration keeps resumed runs off the original
    // sample stream.
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(start as u64));
    let opts = TrainOptions {
        iterations,
        batch_size,
        size,
    };
    let meta_for = |it: usize| {
        let mut m = KvMap::new("train");
        m.set("branch", branch);
        m.set("iteration", it);
        m
    };
    let mut done = 0;
    while done < iterations {
        let span = if every > 0 {
            every.min(iterations - done)
        } else {
            iterations - done
        };
        let offset = start + done;
        let opts = TrainOptions {
            iterations: span,
            ..opts.clone()
        };
        let result = train(&mut bundle, &d1, &d2, &weights, &opts, &mut rng, |it, r| {
            writeln!(log, "{}", log_row(offset + it, r)).map_err(|e| archstyle_net::Error::Io {
                path: log_path.clone(),
                source: e,
            })?;
            if (offset + it) % 50 == 0 {
                log::info!("{}: {r}", offset + it);
            }
            Ok(())
        });
        log.flush().stage("write loss log")?;
        result.map_err(|e| match e {
            archstyle_net::Error::Diverged { iteration, source } => CliError::Runtime {
                stage: "train".into(),
                message: format!("diverged at iteration {}: {source}", offset + iteration),
            },
            other => CliError::Runtime {
                stage: "train".into(),
                message: other.to_string(),
            },
        })?;
        done += span;
        if done < iterations {
            let path = g.out_dir.join(format!("{branch}_iter{:06}.ckpt", start + done));
            checkpoint::save(&bundle, &meta_for(start + done), &path).stage("write checkpoint")?;
        }
    }
    let end = start + iterations;
    let path = g.out_dir.join(format!("{branch}.ckpt"));
    checkpoint::save(&bundle, &meta_for(end), &path).stage("write checkpoint")?;
    println!("{}", path.display());
    Ok(())
}
