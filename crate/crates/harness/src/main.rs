use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgflow_cluster::{distributed_sample_khop, measure_cv, per_rank_cv, Cluster, ClusterConfig, ClusterSpec, TransportKind};
use tgflow_core::graph::{BlockSizing, Directedness, DynamicGraph, InsertionBatch, TemporalEdge};
use tgflow_core::partition::{balance_stats, dispatch, PartitionSpec};
use tgflow_core::sampler::{sample_khop, PolicyKind, SampleRequest, SamplingPolicy};
use tgflow_harness::ablation::{run_ablation, AblationSpec};
use tgflow_harness::bench::{bench, BenchSpec};
use tgflow_harness::config::RunConfig;
use tgflow_harness::continuous::run_continuous_with;
use tgflow_harness::generate::{generate_synthetic, GeneratorSpec};
use tgflow_harness::ingest::{read_edge_file, write_edge_csv, IngestOptions};
use tgflow_harness::metrics::AccessDistribution;

#[derive(Parser)]
#[command(name = "tgflow", version, about = "Continuous-time dynamic graph store, sampler and workload harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate and ingest an edge CSV, printing storage statistics.
    Ingest {
        input: PathBuf,
        #[command(flatten)]
        graph: GraphArgs,
        /// Map arbitrary node keys to dense ids.
        #[arg(long)]
        dense_ids: bool,
    },
    /// Write a synthetic power-law edge stream as CSV.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Temporal k-hop sample from a CSV stream, printed as JSON.
    Sample {
        input: PathBuf,
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        timestamps: Vec<i64>,
        #[arg(long, value_delimiter = ',', default_value = "10")]
        fanouts: Vec<usize>,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sampling and cache-fetch throughput.
    Bench {
        #[command(flatten)]
        source: SourceArgs,
        /// adaptive:TAU, fixed:N, strawman or adjacency_list; repeatable.
        #[arg(long, default_value = "adaptive:48")]
        sizing: Vec<String>,
        #[arg(long)]
        directed: bool,
        #[arg(long, value_delimiter = ',', default_value = "10,10")]
        fanouts: Vec<usize>,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 20)]
        calls: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Split a stream into per-partition CSV shards plus stats.json.
    Partition {
        input: PathBuf,
        #[arg(short, long)]
        partitions: usize,
        #[arg(long)]
        directed: bool,
        #[arg(short, long)]
        out_dir: PathBuf,
    },
    /// Run the continuous-learning loop and write JSON-lines round reports.
    Continuous {
        config: PathBuf,
        /// Defaults to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write per-round access histograms as CSV into this directory.
        #[arg(long)]
        histograms: Option<PathBuf>,
    },
    /// Drive a simulated cluster with uniform trainer load and report
    /// per-worker telemetry and load-balance CVs.
    Cluster {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 2)]
        machines: usize,
        #[arg(long, default_value_t = 2)]
        workers_per_machine: usize,
        #[arg(long)]
        tcp: bool,
        #[arg(long, default_value_t = 1000)]
        requests: usize,
        #[arg(long, value_delimiter = ',', default_value = "10,10")]
        fanouts: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Block-sizing ablation with a grid search under an overhead budget.
    Ablation {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        directed: bool,
        #[arg(long, default_value_t = 1000)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.05)]
        budget: f64,
    },
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    directed: bool,
    #[arg(long, default_value_t = 48)]
    tau: usize,
}

#[derive(Args)]
struct PolicyArgs {
    /// recent, uniform or time_window.
    #[arg(long, default_value = "recent")]
    policy: String,
    #[arg(long)]
    delta: Option<i64>,
}

impl PolicyArgs {
    fn get(&self) -> Result<SamplingPolicy> {
        let kind = match self.policy.as_str() {
            "recent" => PolicyKind::Recent,
            "uniform" => PolicyKind::Uniform,
            "time_window" => PolicyKind::TimeWindow,
            p => bail!("unknown sampling policy {p:?}"),
        };
        let p = SamplingPolicy { kind, delta: self.delta };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    nodes: u64,
    #[arg(long, default_value_t = 100_000)]
    edges: usize,
    #[arg(long, default_value_t = 2.5)]
    skew: f64,
    #[arg(long, default_value_t = 1_000_000)]
    time_span: i64,
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
    #[arg(long, default_value_t = 0)]
    gen_seed: u64,
}

impl GenArgs {
    fn spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            nodes: self.nodes,
            edges: self.edges,
            skew: self.skew,
            time_span: self.time_span,
            drift: self.drift,
            seed: self.gen_seed,
        }
    }
}

#[derive(Args)]
struct SourceArgs {
    /// Edge CSV; a synthetic stream is generated when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgs,
}

impl SourceArgs {
    fn edges(&self) -> Result<Vec<TemporalEdge>> {
        Ok(match &self.input {
            Some(p) => read_edge_file(p, IngestOptions::default())?.edges,
            None => generate_synthetic(&self.gen.spec())?,
        })
    }
}

fn directedness(directed: bool) -> Directedness {
    if directed {
        Directedness::Directed
    } else {
        Directedness::Undirected
    }
}

fn parse_sizing(s: &str) -> Result<BlockSizing> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    let n = || arg.parse::<usize>().with_context(|| format!("bad sizing parameter in {s:?}"));
    let sizing = match kind {
        "adaptive" => BlockSizing::Adaptive { threshold: n()? },
        "fixed" => BlockSizing::Fixed { size: n()? },
        "strawman" => BlockSizing::PerBatch,
        "adjacency_list" => BlockSizing::AdjacencyList,
        _ => bail!("unknown sizing {s:?}"),
    };
    sizing.validate()?;
    Ok(sizing)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_histogram(path: &Path, d: &AccessDistribution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "count"])?;
    for (i, c) in d.histogram.iter().enumerate() {
        w.serialize((i + 1, c))?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Ingest { input, graph, dense_ids } => {
            let stream = read_edge_file(&input, IngestOptions { dense_ids })?;
            let mut g = DynamicGraph::new(directedness(graph.directed), graph.tau)?;
            let out = g.add_edges(&InsertionBatch::new(stream.edges.clone()));
            print_json(&serde_json::json!({
                "rows": stream.edges.len(),
                "ingested": out.edge_ids.len(),
                "rejected": out.rejected,
                "nodes": g.num_nodes(),
                "storage": g.storage_stats(),
            }))?;
        }
        Cmd::Generate { gen, output } => {
            let edges = generate_synthetic(&gen.spec())?;
            write_edge_csv(BufWriter::new(File::create(&output)?), &edges)?;
            log::info!("wrote {} edges to {}", edges.len(), output.display());
        }
        Cmd::Sample {
            input,
            graph,
            targets,
            timestamps,
            fanouts,
            policy,
            seed,
        } => {
            let stream = read_edge_file(&input, IngestOptions::default())?;
            let mut g = DynamicGraph::new(directedness(graph.directed), graph.tau)?;
            g.add_edges(&InsertionBatch::new(stream.edges));
            let req = SampleRequest {
                targets,
                timestamps,
                fanouts,
                policy: policy.get()?,
                seed,
            };
            println!("{}", sample_khop(&g, &req)?.to_json());
        }
        Cmd::Bench {
            source,
            sizing,
            directed,
            fanouts,
            policy,
            repeats,
            calls,
            workers,
            seed,
        } => {
            let edges = source.edges()?;
            let mut reports = Vec::new();
            for s in &sizing {
                let spec = BenchSpec {
                    sizing: parse_sizing(s)?,
                    directedness: directedness(directed),
                    fanouts: fanouts.clone(),
                    policy: policy.get()?,
                    repeats,
                    calls,
                    sampler_workers: workers,
                    seed,
                    ..BenchSpec::default()
                };
                reports.push(bench(&edges, &spec)?);
            }
            print_json(&reports)?;
        }
        Cmd::Partition {
            input,
            partitions,
            directed,
            out_dir,
        } => {
            let edges = read_edge_file(&input, IngestOptions::default())?.edges;
            let spec = PartitionSpec::new(partitions)?;
            let dir = directedness(directed);
            let d = dispatch(&spec, dir, &edges, 0);
            std::fs::create_dir_all(&out_dir)?;
            for (p, part) in d.iter().enumerate() {
                let mut w = csv::Writer::from_path(out_dir.join(format!("part-{p}.csv")))?;
                w.write_record(["src", "dst", "timestamp", "edge_id"])?;
                for (e, id) in part.edges.iter().zip(&part.edge_ids) {
                    w.serialize((e.src, e.dst, e.timestamp, id))?;
                }
                w.flush()?;
            }
            let stats = balance_stats(&spec, dir, &edges);
            serde_json::to_writer_pretty(File::create(out_dir.join("stats.json"))?, &stats)?;
            print_json(&stats)?;
        }
        Cmd::Continuous {
            config,
            output,
            histograms,
        } => {
            let cfg = RunConfig::load(&config)?;
            let mut out: Box<dyn Write> = match output {
                Some(p) => Box::new(BufWriter::new(File::create(p)?)),
                None => Box::new(std::io::stdout().lock()),
            };
            if let Some(dir) = &histograms {
                std::fs::create_dir_all(dir)?;
            }
            run_continuous_with(&cfg, |r| {
                serde_json::to_writer(&mut out, r)?;
                writeln!(out)?;
                if let Some(dir) = &histograms {
                    let hist = |name: &str, d: &Option<AccessDistribution>| -> tgflow_harness::Result<()> {
                        if let Some(d) = d {
                            write_histogram(&dir.join(format!("round-{}-{name}.csv", r.round)), d)
                                .map_err(|e| tgflow_harness::HarnessError::Metric(e.to_string()))?;
                        }
                        Ok(())
                    };
                    hist("nodes", &r.node_access)?;
                    hist("edges", &r.edge_access)?;
                }
                Ok(())
            })?;
            out.flush()?;
        }
        Cmd::Cluster {
            source,
            machines,
            workers_per_machine,
            tcp,
            requests,
            fanouts,
            seed,
        } => {
            let edges = source.edges()?;
            let spec = ClusterSpec::new(machines, workers_per_machine)?;
            let mut cfg = ClusterConfig::new(spec.clone(), Directedness::Undirected);
            if tcp {
                cfg.transport = TransportKind::Tcp;
            }
            let mut cluster = Cluster::new(cfg)?;
            cluster.ingest(&edges, None)?;
            let origins: Vec<_> = spec.workers().collect();
            let per_trainer = requests.div_ceil(origins.len());
            std::thread::scope(|s| -> Result<()> {
                let handles: Vec<_> = origins
                    .iter()
                    .map(|&origin| {
                        let (c, edges, fanouts) = (&cluster, &edges, &fanouts);
                        s.spawn(move || -> Result<()> {
                            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ c.spec().index(origin) as u64);
                            for _ in 0..per_trainer {
                                let e = edges[rng.gen_range(0..edges.len())];
                                let req = SampleRequest {
                                    targets: vec![e.src],
                                    timestamps: vec![e.timestamp + 1],
                                    fanouts: fanouts.clone(),
                                    policy: SamplingPolicy::uniform(),
                                    seed: rng.gen(),
                                };
                                distributed_sample_khop(c, &req, origin)?;
                            }
                            Ok(())
                        })
                    })
                    .collect();
                for h in handles {
                    h.join().expect("trainer thread panicked")?;
                }
                Ok(())
            })?;
            let t = cluster.telemetry();
            let cv = measure_cv(&t);
            let per_rank = per_rank_cv(&spec, &t);
            print_json(&serde_json::json!({
                "transport": if tcp { "tcp" } else { "in_process" },
                "workers": t.iter().map(|w| serde_json::json!({
                    "worker": w.worker.to_string(),
                    "requests_served": w.requests_served,
                    "targets_sampled": w.targets_sampled,
                    "feature_requests": w.feature_requests,
                    "rank_violations": w.rank_violations,
                    "busy_secs": w.busy_time.as_secs_f64(),
                })).collect::<Vec<_>>(),
                "busy_time_cv": cv.busy_time_cv,
                "requests_cv": cv.requests_cv,
                "per_rank_requests_cv": per_rank.iter().map(|c| c.requests_cv).collect::<Vec<_>>(),
                "rank_violations": t.iter().map(|w| w.rank_violations).sum::<u64>(),
                "partition": cluster.balance_stats(),
            }))?;
        }
        Cmd::Ablation {
            source,
            directed,
            batch_size,
            budget,
        } => {
            let edges = source.edges()?;
            let spec = AblationSpec {
                directedness: directedness(directed),
                batch_size,
                budget,
                ..AblationSpec::default()
            };
            print_json(&run_ablation(&edges, &spec)?)?;
        }
    }
    Ok(())
}
