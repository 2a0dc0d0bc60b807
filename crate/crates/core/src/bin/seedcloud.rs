use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use seedcloud::cloud::{merge, ColoredPointCloud};
use seedcloud::image::Image;
use seedcloud::io::{self, config, ply, PlyFormat};
use seedcloud::pipeline::{run_pipeline, self_initialize, PipelineConfig};
use seedcloud::regularize::regularize;
use seedcloud::sfm::{cameras_of, reconstruct_from_tracks, reconstruct_p0, ViewImage};
use seedcloud::synth::{self, SceneSpec, SyntheticScene};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "seedcloud", version, about = "Seed point clouds for sparse-view Gaussian splatting")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Seed for every randomised stage.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override `key=value`, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// PLY encoding for written clouds.
    #[arg(long, global = true, value_enum, default_value_t = Encoding::Binary)]
    format: Encoding,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Encoding {
    Ascii,
    Binary,
}

#[derive(Args, Debug, Clone)]
struct ViewSource {
    /// Synthetic scene: built-in name, scene file, or directory holding `scene.txt`.
    #[arg(long, conflicts_with = "model")]
    scene: Option<String>,
    /// Sparse-model directory (`cameras.txt`, `images.txt`, `points3D.txt`).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Directory with the model's image files (default: `<model>/images`, then `<model>`).
    #[arg(long, requires = "model")]
    images: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct RegularizeFlags {
    /// Fraction of single-view points kept.
    #[arg(long)]
    keep_sv: Option<f64>,
    /// Number of k-means clusters.
    #[arg(long)]
    kmeans_k: Option<usize>,
    /// Fraction of each cluster kept.
    #[arg(long)]
    keep_cluster: Option<f64>,
    /// Normal-consistency threshold.
    #[arg(long)]
    normal_th: Option<f64>,
    /// Neighbours used for normals and consistency.
    #[arg(long)]
    k_neighbors: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reconstruct the initial cloud P0.
    Init {
        #[command(flatten)]
        source: ViewSource,
        /// Triangulate the model's own tracks instead of detecting and matching.
        #[arg(long, requires = "model")]
        model_tracks: bool,
        /// Use original views only (no gradient-masked companions).
        #[arg(long)]
        no_augment: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lightweight splat training from a seed cloud; writes P1 and the field.
    Selfinit {
        #[command(flatten)]
        source: ViewSource,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Field checkpoint (PLY with splat properties).
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Three-stage regularization of a cloud.
    Regularize {
        #[command(flatten)]
        source: ViewSource,
        #[command(flatten)]
        flags: RegularizeFlags,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// P0, self-initialisation and regularization chained.
    Pipeline {
        #[command(flatten)]
        source: ViewSource,
        #[command(flatten)]
        flags: RegularizeFlags,
        #[arg(long)]
        out: PathBuf,
        /// Also write P0, P1 and P_init next to `out`.
        #[arg(long)]
        intermediates: bool,
    },
    /// Held-out evaluation of the regularized and raw seeds on a synthetic scene.
    Eval {
        #[arg(long)]
        scene: String,
        #[command(flatten)]
        flags: RegularizeFlags,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// View-budget sweep on a synthetic scene.
    Ablate {
        #[arg(long)]
        scene: String,
        /// Comma-separated view budgets; `all` uses every training view.
        #[arg(long, default_value = "4,8,all")]
        budgets: String,
        /// Comma-separated run seeds (default: --seed).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Gnuplot data file.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
}

/// Error classes mapped to exit codes 1 and 2.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            eprintln!("For more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn build_config(g: &GlobalArgs, flags: Option<&RegularizeFlags>) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &g.config {
        Some(p) => config::load(p).map_err(|e| usage(anyhow!(e).context(format!("config {}", p.display()))))?,
        None => PipelineConfig::default(),
    };
    for o in &g.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| usage(anyhow!("--set expects KEY=VALUE, got `{o}`")))?;
        config::set(&mut cfg, k.trim(), v).map_err(usage)?;
    }
    if let Some(f) = flags {
        let r = &mut cfg.regularize;
        r.keep_single_view = f.keep_sv.unwrap_or(r.keep_single_view);
        r.kmeans_k = f.kmeans_k.unwrap_or(r.kmeans_k);
        r.keep_cluster = f.keep_cluster.unwrap_or(r.keep_cluster);
        r.normal_threshold = f.normal_th.unwrap_or(r.normal_threshold);
        r.k_neighbors = f.k_neighbors.unwrap_or(r.k_neighbors);
    }
    let cfg = cfg.with_seed(g.seed);
    config::validate(&cfg).map_err(usage)?;
    Ok(cfg)
}

fn provenance(cfg: &PipelineConfig, command: &str) -> Vec<String> {
    vec![
        format!("generator seedcloud {} {command}", env!("CARGO_PKG_VERSION")),
        format!("config_hash {}", config::config_hash(cfg)),
        format!("seed {}", cfg.seed),
    ]
}

fn ply_format(e: Encoding) -> PlyFormat {
    match e {
        Encoding::Ascii => PlyFormat::Ascii,
        Encoding::Binary => PlyFormat::BinaryLittleEndian,
    }
}

fn load_scene_spec(arg: &str) -> Result<SceneSpec, Failure> {
    let path = Path::new(arg);
    let file = if path.is_dir() { path.join("scene.txt") } else { path.to_path_buf() };
    if file.is_file() {
        let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        return text.parse::<SceneSpec>().with_context(|| format!("parsing {}", file.display())).map_err(Failure::Data);
    }
    // A missing path whose last component names a built-in scene selects it.
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or(arg);
    synth::builtin(name).map_err(|_| usage(anyhow!("--scene `{arg}` is neither a scene file, a directory nor a built-in scene")))
}

fn synthetic(arg: &str, seed: u64) -> Result<(SyntheticScene, Vec<Image>), Failure> {
    let spec = load_scene_spec(arg)?;
    Ok(synth::generate_scene(&spec, seed))
}

struct LoadedViews {
    views: Vec<ViewImage>,
    model: Option<io::SparseModel>,
}

fn load_views(src: &ViewSource, seed: u64) -> Result<LoadedViews, Failure> {
    match (&src.scene, &src.model) {
        (Some(s), None) => {
            let (scene, images) = synthetic(s, seed)?;
            let views = images.into_iter().enumerate().map(|(i, im)| ViewImage::new(i, im, scene.cameras[i])).collect();
            Ok(LoadedViews { views, model: None })
        }
        (None, Some(dir)) => {
            let model = io::read_sparse_model(dir)?;
            let image_dir = match &src.images {
                Some(d) => d.clone(),
                None if dir.join("images").is_dir() => dir.join("images"),
                None => dir.clone(),
            };
            let mut views = Vec::with_capacity(model.views.len());
            for (i, v) in model.views.iter().enumerate() {
                let path = image_dir.join(&v.name);
                let img = io::read_image(&path).with_context(|| format!("image {}", path.display()))?;
                if img.width() != v.camera.width() || img.height() != v.camera.height() {
                    return Err(anyhow!(
                        "{} is {}x{} but its camera is {}x{}",
                        path.display(),
                        img.width(),
                        img.height(),
                        v.camera.width(),
                        v.camera.height()
                    )
                    .into());
                }
                views.push(ViewImage::new(i, img, v.camera));
            }
            Ok(LoadedViews { views, model: Some(model) })
        }
        _ => Err(usage(anyhow!("exactly one of --scene or --model is required"))),
    }
}

fn write_cloud(path: &Path, cloud: &ColoredPointCloud, comments: &[String], enc: Encoding) -> Result<(), Failure> {
    let file = ply::cloud_to_ply(cloud, None, comments, ply_format(enc));
    ply::write_ply(path, &file).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_cloud(path: &Path) -> Result<ColoredPointCloud, Failure> {
    let file = ply::read_ply(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ply::cloud_from_ply(&file).with_context(|| format!("reading {}", path.display()))?.cloud)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud");
    out.with_file_name(format!("{stem}.{suffix}.ply"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let flags = match &cli.command {
        Command::Regularize { flags, .. } | Command::Pipeline { flags, .. } | Command::Eval { flags, .. } => Some(flags),
        _ => None,
    };
    let mut cfg = build_config(g, flags)?;
    if g.print_config {
        print!("{}", config::to_text(&cfg));
        return Ok(());
    }
    match &cli.command {
        Command::Init { source, model_tracks, no_augment, out } => {
            if *no_augment {
                cfg.sfm.augment = false;
            }
            let loaded = load_views(source, g.seed)?;
            let p0 = match (&loaded.model, model_tracks) {
                (Some(m), true) => {
                    let images: Vec<&Image> = loaded.views.iter().map(|v| &v.image).collect();
                    reconstruct_from_tracks(m.tracks.clone(), &m.cameras(), &images, &cfg.sfm)?
                }
                _ => reconstruct_p0(&loaded.views, &cfg.sfm)?,
            };
            write_cloud(out, &p0.cloud, &provenance(&cfg, "init"), g.format)?;
            println!("p0.points={}", p0.cloud.len());
            println!("p0.tracks={}", p0.tracks.len());
        }
        Command::Selfinit { source, input, out, field } => {
            let loaded = load_views(source, g.seed)?;
            let p0 = read_cloud(input)?;
            let (f, report, p1) = self_initialize(&p0, &loaded.views, &cfg.selfinit)?;
            let prov = provenance(&cfg, "selfinit");
            write_cloud(out, &p1, &prov, g.format)?;
            if let Some(path) = field {
                ply::write_ply(path, &ply::field_to_ply(&f, &prov, ply_format(g.format)))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            println!("selfinit.steps={}", report.steps);
            println!("selfinit.initial_loss={:.6}", report.initial_loss);
            println!("selfinit.final_loss={:.6}", report.final_loss);
            println!("selfinit.primitives={}", f.len());
            println!("p1.points={}", p1.len());
        }
        Command::Regularize { source, input, out, .. } => {
            let (Some(input), Some(out)) = (input, out) else {
                return Err(usage(anyhow!("regularize needs --input and --out (or --print-config)")));
            };
            let loaded = load_views(source, g.seed)?;
            let cloud = read_cloud(input)?;
            let (reg, stages) = regularize(&cloud, &cameras_of(&loaded.views), &cfg.regularize)?;
            write_cloud(out, &reg, &provenance(&cfg, "regularize"), g.format)?;
            println!("{stages}");
        }
        Command::Pipeline { source, out, intermediates, .. } => {
            let loaded = load_views(source, g.seed)?;
            let res = run_pipeline(&loaded.views, &cfg)?;
            let prov = provenance(&cfg, "pipeline");
            write_cloud(out, &res.regularized, &prov, g.format)?;
            if *intermediates {
                write_cloud(&sibling(out, "p0"), &res.p0.cloud, &prov, g.format)?;
                write_cloud(&sibling(out, "p1"), &res.p1, &prov, g.format)?;
                write_cloud(&sibling(out, "p_init"), &merge(&res.p0.cloud, &res.p1), &prov, g.format)?;
            }
            println!("p0.points={}", res.p0.cloud.len());
            println!("p1.points={}", res.p1.len());
            println!("{}", res.stages);
        }
        Command::Eval { scene, csv, .. } => {
            let (scene, images) = synthetic(scene, g.seed)?;
            let r = synth::paired_eval(&scene, &images, &cfg)?;
            let mut text: String = provenance(&cfg, "eval").iter().map(|l| format!("# {l}\n")).collect();
            text.push_str("seed_cloud,psnr,ssim,chamfer,points\n");
            for (name, m) in [("regularized", &r.regularized), ("raw_p0", &r.raw)] {
                text.push_str(&format!("{name},{:.6},{:.6},{:.6},{}\n", m.psnr, m.ssim, m.chamfer, m.point_count));
            }
            text.push_str(&format!("# p_init_chamfer {:.6}\n", r.p_init_chamfer));
            emit(csv.as_deref(), &text)?;
            if let Some(stages) = &r.regularized.stages {
                eprintln!("{stages}");
            }
        }
        Command::Ablate { scene, budgets, seeds, csv, gnuplot } => {
            let budgets = parse_budgets(budgets).map_err(usage)?;
            let seeds = match seeds {
                Some(s) => parse_list::<u64>(s, "--seeds").map_err(usage)?,
                None => vec![g.seed],
            };
            let (scene, images) = synthetic(scene, g.seed)?;
            let rows = synth::init_strength_experiment(&scene, &images, &budgets, &seeds, &cfg)?;
            let prov = provenance(&cfg, "ablate");
            emit(csv.as_deref(), &synth::strength_csv(&rows, &prov))?;
            if let Some(path) = gnuplot {
                std::fs::write(path, synth::strength_gnuplot(&rows, &prov)).with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, flag: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| anyhow!("{flag}: cannot parse `{t}`")))
        .collect()
}

fn parse_budgets(s: &str) -> Result<Vec<Option<usize>>> {
    let out: Vec<Option<usize>> = s
        .split(',')
        .map(|t| match t.trim() {
            "all" => Ok(None),
            n => n.parse().map(Some).map_err(|_| anyhow!("--budgets: cannot parse `{n}`")),
        })
        .collect::<Result<_>>()?;
    if out.is_empty() {
        bail!("--budgets is empty");
    }
    Ok(out)
}
