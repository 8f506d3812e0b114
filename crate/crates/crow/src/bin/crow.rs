//! Command-line front end: layout, tile, stats, merge, eval, memest.
//!
//! Flag precedence: command-line flags override the optional `--config`
//! file, which overrides the built-in defaults (tile size 512, overlap
//! 0.25, downscale 1.0). Exit codes: 0 success, 1 validation error,
//! 2 partial failure (some images failed), 64 usage error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crow::dataset::load_dataset;
use crow::error::Error;
use crow::eval::{evaluate, EvalConfig};
use crow::layout::{compute_layout, CrowConfig};
use crow::memest::{estimate, load_network, BYTES_FP16, BYTES_FP32};
use crow::merge::{nms, remap_to_frame, TiledDetection};
use crow::pipeline::run_crow;
use crow::sparsity::{compute_sparsity, write_histogram_text, SparsityReport};

#[derive(Parser)]
#[command(name = "crow", version, about = "Cropping-window preprocessing for sparse detection datasets")]
struct Cli {
    /// Flat JSON config file mirroring flag names (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    /// Worker pool size (default: logical CPUs).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the tile layout for an image size as JSON lines.
    Layout {
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long)]
        tile_size: Option<u32>,
        #[arg(long)]
        overlap: Option<f64>,
    },
    /// Transform a training set: overlapping tiles, empty-tile discard,
    /// down-scaled full frame.
    Tile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tile_size: Option<u32>,
        #[arg(long)]
        overlap: Option<f64>,
        #[arg(long)]
        downscale: Option<f64>,
        #[arg(long)]
        min_visibility: Option<f64>,
        #[arg(long)]
        full_frame: Option<bool>,
    },
    /// Foreground/background sparsity statistics of a dataset.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Optional gnuplot-compatible histogram text file.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Merge per-tile detections into full-frame predictions with NMS.
    Merge {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        layout_of: PathBuf,
        #[arg(long)]
        tile_size: Option<u32>,
        #[arg(long)]
        overlap: Option<f64>,
        #[arg(long)]
        nms_iou: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// COCO-protocol mean Average Precision.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        max_dets: Option<usize>,
        /// Evaluate a single IoU threshold instead of the 0.50:0.95 grid.
        #[arg(long)]
        iou: Option<f64>,
    },
    /// Parameter vs stored-activation memory accounting for a conv net.
    Memest {
        #[arg(long)]
        net: PathBuf,
        /// Input shape as HxWxC, e.g. 224x224x3.
        #[arg(long)]
        input: String,
        #[arg(long)]
        batch: Option<u32>,
        /// fp32 or fp16.
        #[arg(long)]
        precision: Option<String>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flat config file; keys mirror the flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
struct FileConfig {
    tile_size: Option<u32>,
    overlap: Option<f64>,
    downscale: Option<f64>,
    min_visibility: Option<f64>,
    full_frame: Option<bool>,
    workers: Option<usize>,
    nms_iou: Option<f64>,
    max_dets: Option<usize>,
    batch: Option<u32>,
    precision: Option<String>,
}

fn load_config(path: Option<&PathBuf>) -> Result<FileConfig, Error> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                offset: 0,
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })
        }
    }
}

fn crow_config(
    file: &FileConfig,
    tile_size: Option<u32>,
    overlap: Option<f64>,
    downscale: Option<f64>,
    min_visibility: Option<f64>,
    full_frame: Option<bool>,
) -> CrowConfig {
    let defaults = CrowConfig::default();
    CrowConfig {
        alpha: tile_size.or(file.tile_size).unwrap_or(defaults.alpha),
        beta: overlap.or(file.overlap).unwrap_or(defaults.beta),
        gamma: downscale.or(file.downscale).unwrap_or(defaults.gamma),
        min_visibility: min_visibility
            .or(file.min_visibility)
            .unwrap_or(defaults.min_visibility),
        include_full_frame: full_frame.or(file.full_frame).unwrap_or(defaults.include_full_frame),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are not usage errors
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(64);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::PartialFailure { failed, total }) => {
            log::error!("{failed} of {total} images failed");
            ExitCode::from(2)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let file = load_config(cli.config.as_ref())?;
    let workers = cli
        .workers
        .or(file.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Argument("workers must be >= 1".into()));
    }
    // the CLI owns the worker budget for all parallel sections
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global();

    match cli.command {
        Command::Layout {
            width,
            height,
            tile_size,
            overlap,
        } => {
            let cfg = crow_config(&file, tile_size, overlap, None, None, None);
            let layout = compute_layout(width, height, &cfg)?;
            let mut stdout = String::new();
            for t in &layout.tiles {
                let clamped = t.width < cfg.alpha || t.height < cfg.alpha;
                let mut line = format!(
                    r#"{{"row":{},"col":{},"x":{},"y":{},"w":{},"h":{}"#,
                    t.row, t.col, t.origin_x, t.origin_y, t.width, t.height
                );
                if clamped {
                    line.push_str(r#","clamped":true"#);
                }
                line.push('}');
                stdout.push_str(&line);
                stdout.push('\n');
            }
            print!("{stdout}");
            Ok(())
        }
        Command::Tile {
            input,
            images,
            out,
            tile_size,
            overlap,
            downscale,
            min_visibility,
            full_frame,
        } => {
            let cfg = crow_config(&file, tile_size, overlap, downscale, min_visibility, full_frame);
            run_crow(&input, &images, &cfg, &out, workers).map(|_| ())
        }
        Command::Stats {
            input,
            compare,
            out,
            histogram,
        } => {
            let report = compute_sparsity(&load_dataset(&input)?);
            if let Some(path) = &histogram {
                write_histogram_text(&report, path)?;
            }
            let payload = match compare {
                Some(other) => {
                    let other_report = compute_sparsity(&load_dataset(&other)?);
                    StatsOutput {
                        ratio_delta: Some(other_report.ratio - report.ratio),
                        compare: Some(other_report),
                        input: report,
                    }
                }
                None => StatsOutput {
                    input: report,
                    compare: None,
                    ratio_delta: None,
                },
            };
            write_json(&payload, &out)
        }
        Command::Merge {
            dets,
            layout_of,
            tile_size,
            overlap,
            nms_iou,
            out,
        } => {
            let cfg = crow_config(&file, tile_size, overlap, None, None, None);
            let threshold = nms_iou.or(file.nms_iou).unwrap_or(0.5);
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::Argument(format!(
                    "NMS IoU threshold must be in [0, 1], got {threshold}"
                )));
            }
            let gt = load_dataset(&layout_of)?;
            let tiled: Vec<TiledDetection> = read_json(&dets)?;

            let mut by_image: BTreeMap<u64, Vec<TiledDetection>> = BTreeMap::new();
            for det in tiled {
                by_image.entry(det.image_id).or_default().push(det);
            }
            let mut merged: Vec<TiledDetection> = Vec::new();
            for (image_id, dets) in by_image {
                let img = gt.image(image_id).ok_or_else(|| {
                    Error::Validation(format!("detections reference unknown image_id {image_id}"))
                })?;
                let layout = compute_layout(img.width, img.height, &cfg)?;
                let remapped = remap_to_frame(&dets, &layout)?;
                for det in &remapped {
                    det.validate()?;
                }
                merged.extend(nms(&remapped, threshold).into_iter().map(|d| TiledDetection {
                    image_id: d.image_id,
                    tile: None,
                    bbox: d.bbox,
                    category_id: d.category_id,
                    score: d.score,
                }));
            }
            write_json(&merged, &out)
        }
        Command::Eval {
            gt,
            dets,
            max_dets,
            iou,
        } => {
            let gt = load_dataset(&gt)?;
            let tiled: Vec<TiledDetection> = read_json(&dets)?;
            let dets: Vec<crow::DetectionRecord> = tiled
                .into_iter()
                .map(|d| {
                    if d.tile.is_some() {
                        return Err(Error::Validation(
                            "eval expects full-frame detections; run `crow merge` first".into(),
                        ));
                    }
                    Ok(crow::DetectionRecord {
                        image_id: d.image_id,
                        bbox: d.bbox,
                        category_id: d.category_id,
                        score: d.score,
                    })
                })
                .collect::<Result<_, _>>()?;
            let cfg = EvalConfig {
                iou_thresholds: match iou {
                    Some(t) => vec![t],
                    None => crow::eval::default_thresholds(),
                },
                max_dets: max_dets.or(file.max_dets).unwrap_or(500),
            };
            let result = evaluate(&gt, &dets, &cfg)?;
            let per_category: BTreeMap<String, f64> = result
                .per_category
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect();
            let out = EvalOutput {
                map: result.map,
                map50: result.map50,
                per_category,
            };
            println!("{}", serde_json::to_string(&out).expect("serialization cannot fail"));
            Ok(())
        }
        Command::Memest {
            net,
            input,
            batch,
            precision,
            out,
        } => {
            let layers = load_network(&net)?;
            let shape = parse_shape(&input)?;
            let batch = batch.or(file.batch).unwrap_or(1);
            let precision = precision.or(file.precision.clone()).unwrap_or_else(|| "fp32".into());
            let bytes = match precision.as_str() {
                "fp32" => BYTES_FP32,
                "fp16" => BYTES_FP16,
                other => {
                    return Err(Error::Argument(format!(
                        "precision must be fp32 or fp16, got {other}"
                    )))
                }
            };
            let report = estimate(&layers, shape, batch, bytes)?;
            print_memest_table(&report);
            match out {
                Some(path) => write_json(&report, &path),
                None => {
                    println!("{}", serde_json::to_string(&report).expect("serialization cannot fail"));
                    Ok(())
                }
            }
        }
    }
}

#[derive(Serialize)]
struct StatsOutput {
    input: SparsityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    compare: Option<SparsityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio_delta: Option<f64>,
}

#[derive(Serialize)]
struct EvalOutput {
    map: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    map50: Option<f64>,
    per_category: BTreeMap<String, f64>,
}

fn parse_shape(text: &str) -> Result<(u32, u32, u32), Error> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() != 3 {
        return Err(Error::Argument(format!(
            "input shape must be HxWxC, got {text}"
        )));
    }
    let parse = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| Error::Argument(format!("invalid shape component {s}")))
    };
    Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}

fn print_memest_table(report: &crow::memest::MemoryReport) {
    const MB: f64 = 1024.0 * 1024.0;
    println!(
        "{:>5}  {:<16} {:>14} {:>12} {:>14} {:>12}",
        "layer", "kind", "out shape", "params MB", "activation MB", "cum act MB"
    );
    for layer in &report.layers {
        let (c, h, w) = layer.output_shape;
        println!(
            "{:>5}  {:<16} {:>14} {:>12.3} {:>14.3} {:>12.3}",
            layer.index,
            format!("{:?}", layer.kind).to_lowercase(),
            format!("{c}x{h}x{w}"),
            layer.parameter_bytes as f64 / MB,
            layer.activation_bytes as f64 / MB,
            layer.cumulative_activation_bytes as f64 / MB,
        );
    }
    println!(
        "total: {} params ({:.3} MB), {} activation elements ({:.3} MB)",
        report.total_parameter_count,
        report.total_parameter_bytes as f64 / MB,
        report.total_activation_elements,
        report.total_activation_bytes as f64 / MB,
    );
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        offset: 0,
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(value: &T, path: &PathBuf) -> Result<(), Error> {
    let mut bytes = serde_json::to_vec(value).expect("serialization cannot fail");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })
}
