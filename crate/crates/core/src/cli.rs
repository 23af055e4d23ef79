//! The `propinc` command line: a batch driver over every module.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Any command that
//! draws random numbers takes `--seed` and is byte-for-byte reproducible.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

use crate::bounds::{
    binom_sides, check_scheme_constraints, dominant_payment_bound, min_payment_oracle, rmh_lower_bound,
    OracleObjective,
};
use crate::custody::{self, CustodyEnvelope, InsecureHashSigner, SignatureScheme, TxParams};
use crate::elimination::{iterate_elimination, lemma_order_elimination, EliminationGame, EliminationRun, OrderPolicy};
use crate::game::{attempt_set, exact_expected_rewards, simulate_authorization, Profile, SimulationConfig};
use crate::rational::{self, Rational};
use crate::schemes::{
    hybrid_expected_payment, make_almost_uniform, make_geometric, make_hybrid, worst_case_payment, RewardTable,
    SchemeAssignment, SeedGroup,
};
use crate::sybil::{scan_sybil, sybil_gain, sybil_report_csv};
use crate::topology::{build_forest, NetworkConfig};
use crate::Error;

pub const CLI_SCHEMA_VERSION: u32 = 1;

/// Largest forest for which `scheme` also reports the exact expected payment.
const EXACT_NODE_LIMIT: usize = 20_000;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(String),
}

type CliResult<T> = Result<T, CliError>;

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn domain<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Domain(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "propinc", version, about = "Reward schemes for information propagation: exact analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo estimate of per-node rewards.
    Simulate(ExperimentArgs),
    /// Iterated elimination of dominated strategies on one strategic tree.
    Eliminate(ExperimentArgs),
    /// Best identity-insertion deviation for every node.
    CheckSybil(ExperimentArgs),
    /// Lower bounds for schemes with dominant full propagation.
    Bounds(ExperimentArgs),
    /// Exact minimum payment over the necessary-condition polytope.
    LpOracle(ExperimentArgs),
    /// Build, verify and settle chain-of-custody envelopes.
    Custody(CustodyArgs),
    /// Print a reward table and its payments.
    Scheme(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SchemeKind {
    AlmostUniform,
    Geometric,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum OrderKind {
    Lemma,
    Greedy,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ObjectiveKind {
    RootReward,
    ExpectedPayment,
}

/// Flags shared by the experiment subcommands; each overrides the
/// matching entry of `--config`.
#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// JSON experiment config; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds (trees).
    #[arg(long)]
    t: Option<u32>,
    /// Branching factor.
    #[arg(long)]
    d: Option<u32>,
    /// Tree height.
    #[arg(long = "H")]
    height: Option<u32>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeKind>,
    /// Rational as `num/den` or an integer.
    #[arg(long)]
    beta: Option<String>,
    /// Reward horizon; defaults to the tree height.
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long)]
    cutoff: Option<u32>,
    /// Hybrid group sizes.
    #[arg(long)]
    a: Option<u32>,
    #[arg(long)]
    b: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Aware non-strategic nodes beyond the seeds.
    #[arg(long)]
    extra_aware: Option<u64>,
    #[arg(long, value_enum)]
    order: Option<OrderKind>,
    /// Number of random orders to run (seeds `seed, seed+1, ...`).
    #[arg(long)]
    orders: Option<u32>,
    #[arg(long)]
    max_clones: Option<u32>,
    /// JSON strategy profile; full propagation when absent.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Chain position for a single gain evaluation.
    #[arg(long)]
    position: Option<u32>,
    /// Chain length for a single gain evaluation.
    #[arg(long)]
    length: Option<u32>,
    /// Clones added for a single gain evaluation.
    #[arg(long)]
    clones: Option<u32>,
    /// `m` for the per-position bound.
    #[arg(long)]
    m: Option<u32>,
    /// Table JSON to check against the necessary conditions.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Horizon of the dominant-strategy analysis.
    #[arg(long)]
    hs: Option<u32>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveKind>,
    /// Directory for output files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RationalText {
    Int(i64),
    Text(String),
}

impl RationalText {
    fn text(&self) -> String {
        match self {
            Self::Int(n) => n.to_string(),
            Self::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TopologyConfig {
    t: Option<u32>,
    d: Option<u32>,
    #[serde(rename = "H")]
    height: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SchemeConfig {
    kind: Option<SchemeKind>,
    beta: Option<RationalText>,
    horizon: Option<u32>,
    base: Option<RationalText>,
    ratio: Option<RationalText>,
    cutoff: Option<u32>,
    a: Option<u32>,
    b: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SolverConfig {
    order: Option<OrderKind>,
    seed: Option<u64>,
    trials: Option<u64>,
    extra_aware: Option<u64>,
    orders: Option<u32>,
    max_clones: Option<u32>,
    hs: Option<u32>,
    m: Option<u32>,
    objective: Option<ObjectiveKind>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutputConfig {
    out: Option<PathBuf>,
}

/// The JSON config file layout.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    topology: TopologyConfig,
    scheme: SchemeConfig,
    solver: SolverConfig,
    output: OutputConfig,
}

impl ExperimentArgs {
    /// Fills unset flags from the config file.
    fn resolve(mut self) -> CliResult<Self> {
        let Some(path) = &self.config else {
            return Ok(self);
        };
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let c: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))?;
        macro_rules! fill {
            ($($flag:ident <- $value:expr),* $(,)?) => { $( if self.$flag.is_none() { self.$flag = $value; } )* };
        }
        fill!(
            t <- c.topology.t,
            d <- c.topology.d,
            height <- c.topology.height,
            scheme <- c.scheme.kind,
            beta <- c.scheme.beta.as_ref().map(RationalText::text),
            horizon <- c.scheme.horizon,
            base <- c.scheme.base.as_ref().map(RationalText::text),
            ratio <- c.scheme.ratio.as_ref().map(RationalText::text),
            cutoff <- c.scheme.cutoff,
            a <- c.scheme.a,
            b <- c.scheme.b,
            order <- c.solver.order,
            seed <- c.solver.seed,
            trials <- c.solver.trials,
            extra_aware <- c.solver.extra_aware,
            orders <- c.solver.orders,
            max_clones <- c.solver.max_clones,
            hs <- c.solver.hs,
            m <- c.solver.m,
            objective <- c.solver.objective,
            out <- c.output.out,
        );
        Ok(self)
    }

    fn need<T: Copy>(value: Option<T>, name: &str) -> CliResult<T> {
        value.ok_or_else(|| usage(format!("missing --{name}")))
    }

    fn rational(text: &Option<String>, name: &str, default: Option<&str>) -> CliResult<Rational> {
        let text = text
            .as_deref()
            .or(default)
            .ok_or_else(|| usage(format!("missing --{name}")))?;
        rational::parse(text).map_err(usage)
    }

    fn network(&self) -> CliResult<NetworkConfig> {
        let seeds = match (self.scheme, self.a, self.b) {
            (Some(SchemeKind::Hybrid), Some(a), Some(b)) => {
                if self.t.is_some_and(|t| t != a + b) {
                    return Err(usage("--t must equal --a + --b for the hybrid scheme"));
                }
                a + b
            }
            _ => Self::need(self.t, "t")?,
        };
        NetworkConfig::new(seeds, Self::need(self.d, "d")?, Self::need(self.height, "H")?).map_err(usage)
    }

    fn table(&self, network: &NetworkConfig) -> CliResult<RewardTable> {
        let horizon = self.horizon.unwrap_or(network.height);
        match self.scheme.unwrap_or(SchemeKind::AlmostUniform) {
            SchemeKind::AlmostUniform => {
                make_almost_uniform(Self::rational(&self.beta, "beta", Some("1"))?, horizon).map_err(usage)
            }
            SchemeKind::Geometric => make_geometric(
                Self::rational(&self.base, "base", Some("1"))?,
                Self::rational(&self.ratio, "ratio", None)?,
                self.cutoff.unwrap_or(horizon),
            )
            .map_err(usage),
            SchemeKind::Hybrid => Err(usage("the hybrid scheme assigns one table per seed group")),
        }
    }

    fn assignment(&self, network: &NetworkConfig) -> CliResult<SchemeAssignment> {
        match self.scheme.unwrap_or(SchemeKind::AlmostUniform) {
            SchemeKind::Hybrid => make_hybrid(
                Self::need(self.a, "a")?,
                Self::need(self.b, "b")?,
                network.branching,
                network.height,
            )
            .map_err(usage),
            _ => Ok(SchemeAssignment::uniform(network.seeds, self.table(network)?)),
        }
    }

    fn scheme_name(&self) -> &'static str {
        match self.scheme.unwrap_or(SchemeKind::AlmostUniform) {
            SchemeKind::AlmostUniform => "almost-uniform",
            SchemeKind::Geometric => "geometric",
            SchemeKind::Hybrid => "hybrid",
        }
    }

    fn profile(&self, forest: &crate::topology::Forest, max_level: u32) -> CliResult<Profile> {
        match &self.profile {
            None => Ok(Profile::honest(forest, max_level)),
            Some(path) => {
                let text =
                    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
                let value: serde_json::Value = serde_json::from_str(&text).map_err(usage)?;
                Profile::from_json(forest, max_level, &value).map_err(usage)
            }
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| domain(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| domain(format!("cannot write {}: {e}", path.display())))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serialises") + "\n"
}

fn cmd_simulate(args: ExperimentArgs, out: &mut dyn Write) -> CliResult<()> {
    let network = args.network()?;
    let assignment = args.assignment(&network)?;
    let forest = build_forest(network).map_err(usage)?;
    let profile = args.profile(&forest, assignment.max_height())?;
    let config = SimulationConfig {
        trials: args.trials.unwrap_or(100_000),
        seed: args.seed.unwrap_or(0),
        external_attempters: args.extra_aware.unwrap_or(0),
    };
    if config.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let report = simulate_authorization(&forest, &profile, &assignment, config).map_err(domain)?;
    let summary = report.summary_json();
    if let Some(dir) = &args.out {
        write_file(dir, "nodes.csv", &report.to_csv())?;
        write_file(dir, "summary.json", &summary)?;
    }
    writeln!(out, "{}", summary.trim_end()).map_err(domain)
}

fn elimination_summary(run: &EliminationRun) -> serde_json::Value {
    json!({
        "fully_propagating": run.game.is_fully_propagating(),
        "honest_survives": run.game.honest_profile_survives(),
        "removals": run.trace.len(),
        "remaining_strategies": run.game.strategy_count(),
    })
}

fn cmd_eliminate(args: ExperimentArgs, out: &mut dyn Write) -> CliResult<()> {
    let network = args.network()?;
    if matches!(args.scheme, Some(SchemeKind::Hybrid)) {
        return Err(usage("elimination needs a single table"));
    }
    let table = args.table(&network)?;
    // one strategic tree; the other seeds and the extra aware nodes compete from outside
    let external = u64::from(network.seeds - 1) + args.extra_aware.unwrap_or(0);
    let tree = NetworkConfig::new(1, network.branching, network.height).map_err(usage)?;
    let game = EliminationGame::new(tree, table, external).map_err(usage)?;
    let order = args.order.unwrap_or(OrderKind::Lemma);
    let seed = args.seed.unwrap_or(0);
    let orders = args.orders.unwrap_or(1);
    if orders == 0 {
        return Err(usage("--orders must be positive"));
    }

    let runs: Vec<EliminationRun> = match order {
        OrderKind::Lemma => vec![lemma_order_elimination(&game).map_err(domain)?],
        OrderKind::Greedy => vec![iterate_elimination(&game, &OrderPolicy::Greedy).map_err(domain)?],
        OrderKind::Random => (0..orders)
            .map(|k| iterate_elimination(&game, &OrderPolicy::Random(seed + u64::from(k))).map_err(domain))
            .collect::<CliResult<_>>()?,
    };
    let first = &runs[0];
    let summary = json!({
        "schema_version": CLI_SCHEMA_VERSION,
        "order": format!("{order:?}").to_lowercase(),
        "seed": seed,
        "external_attempters": external,
        "hypotheses": first.hypotheses,
        "runs": runs.iter().map(elimination_summary).collect::<Vec<_>>(),
        "all_fully_propagating": runs.iter().all(|r| r.game.is_fully_propagating()),
        "all_honest_survive": runs.iter().all(|r| r.game.honest_profile_survives()),
    });
    if let Some(dir) = &args.out {
        write_file(dir, "survivors.json", &pretty(&first.survivors_json()))?;
        write_file(dir, "trace.jsonl", &first.trace_json_lines())?;
        write_file(dir, "summary.json", &pretty(&summary))?;
    }
    write!(out, "{}", pretty(&summary)).map_err(domain)
}

fn cmd_check_sybil(args: ExperimentArgs, out: &mut dyn Write) -> CliResult<()> {
    if let (Some(position), Some(length)) = (args.position, args.length) {
        let network_height = args.height.unwrap_or(length + args.clones.unwrap_or(1));
        let fake = NetworkConfig {
            seeds: 1,
            branching: 2,
            height: network_height,
        };
        let table = args.table(&fake)?;
        let gain = sybil_gain(&table, position, length, args.clones.unwrap_or(1)).map_err(usage)?;
        let v = json!({"position": position, "length": length, "clones": args.clones.unwrap_or(1), "gain": rational::format(&gain)});
        return write!(out, "{}", pretty(&v)).map_err(domain);
    }
    let network = args.network()?;
    let assignment = args.assignment(&network)?;
    let forest = build_forest(network).map_err(usage)?;
    let profile = args.profile(&forest, assignment.max_height())?;
    let responses = scan_sybil(
        &forest,
        &assignment,
        &profile,
        args.extra_aware.unwrap_or(0),
        args.max_clones.unwrap_or(2),
    )
    .map_err(domain)?;
    let csv = sybil_report_csv(args.scheme_name(), &responses);
    if let Some(dir) = &args.out {
        write_file(dir, "sybil.csv", &csv)?;
    }
    write!(out, "{csv}").map_err(domain)
}

fn cmd_bounds(args: ExperimentArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), json!(CLI_SCHEMA_VERSION));
    let t = ExperimentArgs::need(args.t, "t")?;
    if let Some(path) = &args.table {
        let hs = ExperimentArgs::need(args.hs, "hs")?;
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let table = RewardTable::from_json_str(&text).map_err(usage)?;
        let report = check_scheme_constraints(&table, t, hs).map_err(usage)?;
        let (lhs, rhs) = binom_sides(&table, hs).map_err(usage)?;
        doc.insert("constraints".into(), serde_json::to_value(&report).map_err(domain)?);
        doc.insert(
            "binom".into(),
            json!({"holds": lhs >= rhs, "lhs": rational::format(&lhs), "rhs": rational::format(&rhs)}),
        );
    }
    if let Some(m) = args.m {
        let b = rmh_lower_bound(m, t).map_err(usage)?;
        doc.insert("rmh".into(), json!({"m": m, "t": t, "value": rational::format(&b.lower)}));
    }
    if let Some(h) = args.height {
        let b = dominant_payment_bound(t, h).map_err(usage)?;
        doc.insert(
            "dominant_payment_bound".into(),
            json!({
                "t": t,
                "H": h,
                "approx": format!("{:.10}", b.approx()),
                "exact_part": rational::format(&b.exact_part),
                "lower": rational::format(&b.lower),
                "upper": rational::format(&b.upper),
            }),
        );
    }
    if doc.len() == 1 {
        return Err(usage("bounds needs --H, --m or --table"));
    }
    let text = pretty(&serde_json::Value::Object(doc));
    if let Some(dir) = &args.out {
        write_file(dir, "bounds.json", &text)?;
    }
    write!(out, "{text}").map_err(domain)
}

fn cmd_lp_oracle(args: ExperimentArgs, out: &mut dyn Write) -> CliResult<()> {
    let hs = ExperimentArgs::need(args.hs.or(args.height), "hs")?;
    let t = ExperimentArgs::need(args.t, "t")?;
    let objective = match args.objective.unwrap_or(ObjectiveKind::RootReward) {
        ObjectiveKind::RootReward => OracleObjective::RootReward,
        ObjectiveKind::ExpectedPayment => OracleObjective::ExpectedPayment,
    };
    let result = min_payment_oracle(hs, t, objective).map_err(|e| match e {
        Error::SizeLimit(_) => usage(e),
        other => domain(other),
    })?;
    let mut v = result.to_json();
    v["schema_version"] = json!(CLI_SCHEMA_VERSION);
    if t >= 2 {
        v["rmh_lower_bound"] = json!(rational::format(&rmh_lower_bound(hs, t).map_err(domain)?.lower));
    }
    let text = pretty(&v);
    if let Some(dir) = &args.out {
        write_file(dir, "oracle.json", &text)?;
    }
    write!(out, "{text}").map_err(domain)
}

fn cmd_scheme(args: ExperimentArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), json!(CLI_SCHEMA_VERSION));
    if matches!(args.scheme, Some(SchemeKind::Hybrid)) {
        let network = args.network()?;
        let assignment = args.assignment(&network)?;
        if let Some(w) = &assignment.warning {
            writeln!(err, "warning: {w}").map_err(domain)?;
        }
        let expected = hybrid_expected_payment(&assignment, network.branching, network.height).map_err(domain)?;
        doc.insert("scheme".into(), json!("hybrid"));
        doc.insert("expected_payment".into(), json!(rational::format(&expected)));
        doc.insert("expected_payment_approx".into(), json!(format!("{:.6}", rational::to_f64(&expected))));
        doc.insert(
            "worst_case_payment".into(),
            json!({
                "A": rational::format(&worst_case_payment(&assignment, SeedGroup::A)),
                "B": rational::format(&worst_case_payment(&assignment, SeedGroup::B)),
            }),
        );
        if network.node_count() <= 1 << 20 {
            let forest = build_forest(network).map_err(domain)?;
            let profile = Profile::honest(&forest, assignment.max_height());
            let aware = attempt_set(&forest, &profile, &assignment).map_err(domain)?.len();
            doc.insert(
                "aware_fraction".into(),
                json!(rational::format(&rational::ratio(aware as i64, forest.len() as i64))),
            );
            if forest.len() <= EXACT_NODE_LIMIT {
                let exact = exact_expected_rewards(&forest, &profile, &assignment, 0).map_err(domain)?;
                doc.insert("exact_expected_payment".into(), json!(rational::format(&exact.expected_payment)));
            }
        }
    } else {
        let height = args.horizon.or(args.cutoff).or(args.height);
        let network = NetworkConfig {
            seeds: 1,
            branching: 2,
            height: ExperimentArgs::need(height, "horizon")?,
        };
        let table = args.table(&network)?;
        let ir = table.check_individual_rationality(table.height());
        doc.insert("scheme".into(), json!(args.scheme_name()));
        doc.insert("table".into(), table.to_json());
        doc.insert(
            "total_payment".into(),
            json!((1..=table.height()).map(|h| rational::format(&table.total_payment(h))).collect::<Vec<_>>()),
        );
        doc.insert("individually_rational".into(), json!(ir.holds));
    }
    write!(out, "{}", pretty(&serde_json::Value::Object(doc))).map_err(domain)
}

#[derive(Args, Debug)]
struct CustodyArgs {
    #[command(subcommand)]
    action: CustodyAction,
}

#[derive(Subcommand, Debug)]
enum CustodyAction {
    /// Build a random signed chain and write its encoding.
    Create {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Honest hops after the seed.
        #[arg(long, default_value_t = 2)]
        hops: u32,
        /// Fake identities inserted by the last forwarder.
        #[arg(long, default_value_t = 0)]
        fakes: u32,
        #[arg(long, default_value_t = 12)]
        fee: u64,
        #[arg(long, default_value_t = 30)]
        amount: u64,
        #[arg(long, default_value = "1/3")]
        beta: String,
        #[arg(long, default_value_t = 3)]
        horizon: u32,
        /// Attach an authorization claim by the head.
        #[arg(long)]
        claim: bool,
        /// Output file for the encoded envelope.
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify an encoded envelope and print its chain length.
    Verify { file: PathBuf },
    /// Settle an encoded envelope with its own table.
    Settle { file: PathBuf },
    /// Print an encoded envelope as JSON.
    Inspect { file: PathBuf },
}

fn custody_err(e: custody::CustodyError) -> CliError {
    match e {
        custody::CustodyError::InvalidParameter(_) => usage(e),
        other => domain(other),
    }
}

fn read_envelope(path: &Path) -> CliResult<CustodyEnvelope> {
    let bytes = fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    CustodyEnvelope::decode(&bytes).map_err(domain)
}

fn cmd_custody(args: CustodyArgs, out: &mut dyn Write) -> CliResult<()> {
    let signer = InsecureHashSigner;
    let text = match args.action {
        CustodyAction::Create {
            seed,
            hops,
            fakes,
            fee,
            amount,
            beta,
            horizon,
            claim,
            out: path,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fresh = || custody::secret_from_seed(rng.next_u64());
            let payer = fresh();
            let payee = signer.public_key(&fresh());
            let keys: Vec<_> = (0..=hops).map(|_| fresh()).collect();
            let params = TxParams {
                payee,
                amount,
                fee,
                beta: rational::parse(&beta).map_err(usage)?,
                horizon,
            };
            let record = custody::init_transaction(&signer, &payer, &params, &[signer.public_key(&keys[0])])
                .map_err(custody_err)?
                .remove(0);
            let mut env = CustodyEnvelope::new(record);
            for i in 0..hops as usize {
                let f = if i + 1 == hops as usize { fakes } else { 0 };
                env = custody::forward(&signer, &env, &keys[i], &signer.public_key(&keys[i + 1]), f)
                    .map_err(custody_err)?;
            }
            if claim {
                let head = keys.last().expect("at least the seed");
                env = custody::claim_authorization(&signer, &env, head, b"proof-placeholder".to_vec())
                    .map_err(custody_err)?;
            }
            fs::write(&path, env.encode()).map_err(|e| domain(format!("cannot write {}: {e}", path.display())))?;
            pretty(&env.to_json())
        }
        CustodyAction::Verify { file } => {
            let env = read_envelope(&file)?;
            let h = custody::verify_chain(&signer, &env).map_err(domain)?;
            pretty(&json!({"valid": true, "h": h}))
        }
        CustodyAction::Settle { file } => {
            let env = read_envelope(&file)?;
            pretty(&custody::settle(&signer, &env).map_err(domain)?.to_json())
        }
        CustodyAction::Inspect { file } => pretty(&read_envelope(&file)?.to_json()),
    };
    write!(out, "{text}").map_err(domain)
}

/// Runs the CLI with explicit output streams; returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => a.resolve().and_then(|a| cmd_simulate(a, out)),
        Command::Eliminate(a) => a.resolve().and_then(|a| cmd_eliminate(a, out)),
        Command::CheckSybil(a) => a.resolve().and_then(|a| cmd_check_sybil(a, out)),
        Command::Bounds(a) => a.resolve().and_then(|a| cmd_bounds(a, out)),
        Command::LpOracle(a) => a.resolve().and_then(|a| cmd_lp_oracle(a, out)),
        Command::Custody(a) => cmd_custody(a, out),
        Command::Scheme(a) => a.resolve().and_then(|a| cmd_scheme(a, out, err)),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            2
        }
        Err(CliError::Domain(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

/// Runs the CLI on the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}
