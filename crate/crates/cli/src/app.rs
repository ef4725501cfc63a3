// SPDX-License-Identifier: CC0-1.0

//! Command definitions and dispatch.
//!
//! Every command parses its inputs, calls one or two library operations and prints
//! the result as JSON. Exit codes: 0 on success, 1 when a domain check rejects the
//! input (the reason is printed), 2 on usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use covenant_core::compose::{
    build_chain, build_disjoint, build_multi_deposit, cpfp_child, enumerate_fee_variants, wallet_locking_script,
    ChainParams, ComposeError, CovenantGraph, FundingSource, NodeInput,
};
use covenant_core::covenant::{
    prove_covenant, sign_commitment, size_report, verify_proof, Commitment, CovenantError, CovenantEvidence,
    CovenantTemplate, CustodialPolicy, DepositSpec, Mechanism, ProofBundle, RecoveredStyle, RefundPath,
};
use covenant_core::crypto::{nums_signature, seeded_signature, sign, PrivateKey, SignatureSeeds};
use covenant_core::ctv::ctv_hash;
use covenant_core::protocol::{key_lifetime_report, run_scenario, Scenario};
use covenant_core::script::Script;
use covenant_core::sighash::SigHashType;
use covenant_core::tx::{Amount, OutPoint, Transaction, TxOutput};
use covenant_core::validator::{ChainConfig, ChainSnapshot, ChainState, Rejection};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::input::{parse_hex, parse_hex32, parse_json, parse_tx, ParseError};
use crate::wallet::{CovenantWallet, WalletError};

pub const DEFAULT_WALLET: &str = "covenant-wallet.json";
pub const DEFAULT_CHAIN: &str = "covenant-chain.json";

#[derive(Debug, Parser)]
#[command(name = "covenant", version, about = "Build, simulate and verify Bitcoin covenants")]
pub struct Cli {
    /// Wallet file.
    #[arg(long, global = true, env = "COVENANT_WALLET", default_value = DEFAULT_WALLET)]
    pub wallet: PathBuf,
    /// Validator state file.
    #[arg(long, global = true, env = "COVENANT_CHAIN", default_value = DEFAULT_CHAIN)]
    pub chain: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key pair and store it in the wallet.
    Keygen {
        #[arg(long)]
        label: Option<String>,
        /// Mark the key as a custodial key.
        #[arg(long)]
        custodial: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Deposit address and scripts for a deposit spec.
    Address {
        /// Deposit spec JSON file.
        spec: PathBuf,
    },
    /// CTV template hash of a transaction.
    CtvHash {
        /// Transaction hex.
        tx: String,
        #[arg(long, default_value_t = 0)]
        input: u32,
    },
    /// NUMS commitment signature over a digest and the key it recovers to.
    NumsSig {
        /// 32-byte digest hex.
        digest: String,
    },
    /// Seeded commitment signature over a digest and the key it recovers to.
    SeededSig {
        digest: String,
        #[arg(long)]
        seed_r: String,
        #[arg(long)]
        seed_s: String,
        /// Store the seeds in the wallet under this label.
        #[arg(long)]
        store: Option<String>,
    },
    /// Sign a covenant template with an enforcement key from the wallet.
    SignCommitment {
        /// Template transaction hex.
        template: String,
        /// Deposit spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// Deposit amount in satoshis.
        #[arg(long)]
        amount: u64,
        /// Wallet label of the enforcement key.
        #[arg(long)]
        key: String,
        #[arg(long, default_value_t = 0)]
        input: usize,
        #[arg(long, default_value = "ALL")]
        sighash: SigHashType,
    },
    /// Build a covenant chain funded on the validator.
    BuildChain {
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long, default_value_t = 1)]
        length: usize,
    },
    /// Build two disjoint covenants over one deposit.
    BuildDisjoint {
        #[command(flatten)]
        build: BuildArgs,
        /// Branch A output as `AMOUNT` or `AMOUNT:SCRIPT_HEX`; repeatable.
        #[arg(long = "branch-a", required = true)]
        branch_a: Vec<String>,
        /// Branch B output; repeatable.
        #[arg(long = "branch-b", required = true)]
        branch_b: Vec<String>,
    },
    /// Build one covenant spending several deposits.
    BuildMultideposit {
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long, default_value_t = 2)]
        deposits: usize,
        /// Add a refund path to the first custodial key at this height.
        #[arg(long)]
        refund_height: Option<u32>,
    },
    /// Enumerate pre-signed fee variants of a deleted-key chain.
    FeeVariants {
        /// Variants per level.
        #[arg(long)]
        p: usize,
        /// Chain length.
        #[arg(long)]
        t: usize,
        /// Feerates in sat/byte, comma separated; defaults to 1, 2, 4, ...
        #[arg(long, value_delimiter = ',')]
        feerates: Vec<u64>,
        #[arg(long, default_value_t = covenant_core::compose::DEFAULT_VARIANT_CAP)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Child transaction that bumps a parent through one of its outputs.
    CpfpChild {
        /// Parent transaction hex.
        parent: String,
        #[arg(long)]
        vout: u32,
        /// Fee the parent pays, in satoshis.
        #[arg(long)]
        parent_fee: u64,
        /// Target package feerate in sat/byte.
        #[arg(long)]
        feerate: u64,
        /// Wallet label of the key controlling the output.
        #[arg(long)]
        key: String,
        /// Destination script hex; defaults to the key's own wallet script.
        #[arg(long)]
        destination: Option<String>,
    },
    /// Run an enforcement protocol scenario.
    Simulate {
        scenario: PathBuf,
        /// Write the event trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write a proof bundle for the first stored package.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Proof bundle for a node of a stored graph.
    Prove {
        #[arg(long)]
        graph: String,
        #[arg(long, default_value_t = 0)]
        node: usize,
        /// Also store the bundle as a wallet package.
        #[arg(long)]
        store: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a proof bundle.
    VerifyProof { bundle: PathBuf },
    /// Finalize a stored graph and broadcast it to the validator.
    Broadcast {
        #[arg(long)]
        graph: String,
    },
    /// Validator control.
    #[command(subcommand)]
    Chain(ChainCommand),
    /// Byte accounting for a mechanism's commitment.
    SizeReport {
        #[arg(long)]
        mechanism: Mechanism,
        /// Use a seeded rather than NUMS recovered-key signature.
        #[arg(long)]
        seeded: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the wallet.
    Export {
        /// Drop the secrets section.
        #[arg(long)]
        public: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ChainCommand {
    /// Start a new validator state.
    Init {
        #[arg(long, default_value_t = 6)]
        confirmation_depth: u32,
        #[arg(long, default_value_t = 0)]
        subsidy: u64,
    },
    /// Create an output out of thin air.
    Mint {
        /// Locking script hex.
        #[arg(long)]
        script: Option<String>,
        /// Pay to the wallet script of this wallet key instead.
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        amount: u64,
    },
    /// Submit a transaction to the mempool.
    Submit { tx: String },
    /// Mine blocks from the mempool.
    Mine {
        #[arg(long, default_value_t = 1)]
        blocks: u32,
        /// Block capacity in bytes.
        #[arg(long)]
        capacity: Option<usize>,
    },
    /// Summary of the validator state.
    State,
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    #[arg(long, default_value = "deleted-key")]
    pub mechanism: Mechanism,
    /// Amount of each funding output in satoshis.
    #[arg(long, default_value_t = 100_000)]
    pub amount: u64,
    /// Wallet label of a custodial key; repeatable. A new key is created when absent.
    #[arg(long)]
    pub custodian: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub custody_threshold: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Fee per transaction in satoshis.
    #[arg(long, default_value_t = 1_000)]
    pub fee: u64,
    /// Destination script hex; defaults to the first custodian's wallet script.
    #[arg(long)]
    pub destination: Option<String>,
    #[arg(long)]
    pub sighash: Option<SigHashType>,
    /// Recovered-key only: use seeded signatures, storing the seeds in the wallet.
    #[arg(long)]
    pub seeded: bool,
    /// Graph label in the wallet.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Why a command failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Rejected { reason: String, detail: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Rejected { .. } => 1,
        }
    }

    fn usage(m: impl Into<String>) -> CliError {
        CliError::Usage(m.into())
    }

    fn rejected(reason: impl Into<String>, detail: impl ToString) -> CliError {
        CliError::Rejected { reason: reason.into(), detail: detail.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Rejected { reason, detail } => write!(f, "rejected: {reason}: {detail}"),
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<WalletError> for CliError {
    fn from(e: WalletError) -> CliError {
        match e {
            WalletError::PackageRejected { reason, .. } => CliError::rejected(reason, e),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<CovenantError> for CliError {
    fn from(e: CovenantError) -> CliError {
        CliError::rejected("covenant", e)
    }
}

impl From<ComposeError> for CliError {
    fn from(e: ComposeError) -> CliError {
        CliError::rejected("compose", e)
    }
}

impl From<Rejection> for CliError {
    fn from(r: Rejection) -> CliError {
        CliError::rejected(r.reason.as_str(), r)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(v) => {
            let text = match v {
                Value::String(s) => s,
                v => serde_json::to_string_pretty(&v).expect("json values serialize"),
            };
            let _ = writeln!(out, "{}", text.trim_end());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn amount(sat: u64) -> Result<Amount, CliError> {
    Amount::from_sat(sat).map_err(|e| CliError::usage(e.to_string()))
}

fn rng_for(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn load_chain(path: &Path) -> Result<ChainState, CliError> {
    match std::fs::read_to_string(path) {
        Ok(text) => {
            let snap: ChainSnapshot = parse_json(&path.display().to_string(), &text)?;
            ChainState::from_snapshot(snap).map_err(CliError::Usage)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ChainState::new(ChainConfig::default())),
        Err(e) => Err(CliError::usage(format!("{}: {e}", path.display()))),
    }
}

fn save_chain(path: &Path, chain: &ChainState) -> Result<(), CliError> {
    write_file(path, &(serde_json::to_string_pretty(&chain.snapshot()).expect("snapshot serializes") + "\n"))
}

fn wallet_key<'a>(wallet: &'a CovenantWallet, label: &str) -> Result<&'a PrivateKey, CliError> {
    wallet.secret(label).ok_or_else(|| CliError::usage(format!("no private key labelled {label:?} in the wallet")))
}

fn parse_output(text: &str, default: &Script) -> Result<TxOutput, CliError> {
    let (sat, script) = match text.split_once(':') {
        Some((a, s)) => (a, Script::from_bytes(parse_hex("output script", s)?)),
        None => (text, default.clone()),
    };
    let sat: u64 = sat.parse().map_err(|_| CliError::usage(format!("bad output amount {sat:?}")))?;
    Ok(TxOutput::new(amount(sat)?, script))
}

fn execute(cli: &Cli) -> Result<Value, CliError> {
    match &cli.command {
        Command::Keygen { label, custodial, seed } => {
            let mut wallet = CovenantWallet::load_or_new(&cli.wallet)?;
            let label = label.clone().unwrap_or_else(|| wallet.next_label("key"));
            let key = PrivateKey::generate(&mut rng_for(*seed));
            let pk = wallet.add_key(&label, key, *custodial)?;
            wallet.save(&cli.wallet)?;
            Ok(json!({ "label": label, "public_key": pk, "custodial": custodial }))
        }
        Command::Address { spec } => {
            let spec: DepositSpec = parse_json(&spec.display().to_string(), &read_file(spec)?)?;
            let script = spec.witness_script()?;
            Ok(json!({
                "address": spec.address()?,
                "locking_script": hex::encode(spec.locking_script()?.as_bytes()),
                "witness_script": hex::encode(script.as_bytes()),
                "witness_script_asm": script.to_asm(),
            }))
        }
        Command::CtvHash { tx, input } => {
            let tx = parse_tx("transaction", tx)?;
            let h = ctv_hash(&tx, *input).map_err(|e| CliError::rejected("ctv", e))?;
            Ok(to_value(&h))
        }
        Command::NumsSig { digest } => {
            let digest = parse_hex32("digest", digest)?;
            let (sig, key) = nums_signature(&digest).map_err(|e| CliError::rejected("nums", e))?;
            Ok(json!({ "signature": hex::encode(sig.to_der()), "size": sig.size(), "key": key }))
        }
        Command::SeededSig { digest, seed_r, seed_s, store } => {
            let digest = parse_hex32("digest", digest)?;
            let seeds = SignatureSeeds { seed_r: parse_hex("seed-r", seed_r)?, seed_s: parse_hex("seed-s", seed_s)? };
            let (sig, key) = seeded_signature(&seeds, &digest).map_err(|e| CliError::rejected("seeded", e))?;
            if let Some(label) = store {
                let mut wallet = CovenantWallet::load_or_new(&cli.wallet)?;
                wallet.add_seeds(label, seeds);
                wallet.save(&cli.wallet)?;
            }
            Ok(json!({ "signature": hex::encode(sig.to_der()), "size": sig.size(), "key": key }))
        }
        Command::SignCommitment { template, spec, amount: sat, key, input, sighash } => {
            let wallet = CovenantWallet::load_or_new(&cli.wallet)?;
            let tx = parse_tx("template", template)?;
            let spec: DepositSpec = parse_json(&spec.display().to_string(), &read_file(spec)?)?;
            let Commitment::DeletedKey { enforcement } = &spec.commitment else {
                return Err(CliError::rejected(
                    "mechanism-mismatch",
                    "only deleted-key deposits take enforcement signatures",
                ));
            };
            let template = CovenantTemplate::new(tx, *sighash, spec.mechanism());
            let ctx = spec.spent_context(amount(*sat)?)?;
            let sig = sign_commitment(&template, *input, wallet_key(&wallet, key)?, &ctx, enforcement)?;
            Ok(to_value(&sig))
        }
        Command::BuildChain { build, length } => build_graph(cli, build, |funding, params, rng| {
            let mut params = params;
            params.length = *length;
            params.level_fees = vec![params.level_fees[0]; *length];
            build_chain(&funding[0], &params, rng)
        }),
        Command::BuildDisjoint { build, branch_a, branch_b } => build_graph(cli, build, |funding, params, rng| {
            let a = branch_a.iter().map(|o| parse_output(o, &params.destination)).collect::<Result<_, _>>();
            let b = branch_b.iter().map(|o| parse_output(o, &params.destination)).collect::<Result<_, _>>();
            match (a, b) {
                (Ok(a), Ok(b)) => build_disjoint(&funding[0], &params, a, b, rng),
                (Err(e), _) | (_, Err(e)) => Err(ComposeError::Graph(e.to_string())),
            }
        }),
        Command::BuildMultideposit { build, deposits, refund_height } => {
            if *deposits == 0 {
                return Err(CliError::usage("at least one deposit is required"));
            }
            build_graph_n(cli, build, *deposits, *refund_height, |funding, params, rng| {
                build_multi_deposit(funding, &params, rng)
            })
        }
        Command::FeeVariants { p, t, feerates, cap, seed } => fee_variants(*p, *t, feerates, *cap, *seed),
        Command::CpfpChild { parent, vout, parent_fee, feerate, key, destination } => {
            let wallet = CovenantWallet::load_or_new(&cli.wallet)?;
            let parent = parse_tx("parent", parent)?;
            let key = wallet_key(&wallet, key)?.clone();
            let out = parent
                .outputs
                .get(*vout as usize)
                .ok_or_else(|| CliError::usage(format!("parent has no output {vout}")))?;
            let funding = FundingSource { outpoint: OutPoint::new(parent.txid(), *vout), amount: out.amount, key };
            let destination = match destination {
                Some(d) => Script::from_bytes(parse_hex("destination", d)?),
                None => wallet_locking_script(&funding.key.public_key()),
            };
            let child = cpfp_child(&parent, amount(*parent_fee)?, *feerate, &funding, destination)?;
            Ok(json!({ "txid": child.txid(), "size": child.size(), "hex": child.to_hex() }))
        }
        Command::Simulate { scenario, trace, bundle } => simulate(scenario, trace.as_deref(), bundle.as_deref()),
        Command::Prove { graph, node, store, out } => {
            let mut wallet = CovenantWallet::load_or_new(&cli.wallet)?;
            let g = wallet.graph(graph).ok_or_else(|| CliError::usage(format!("no graph labelled {graph:?}")))?;
            let seeds = wallet
                .secrets
                .as_ref()
                .and_then(|s| s.seeds.iter().find(|x| &x.label == graph))
                .map(|s| s.seeds.clone());
            let bundle = prove_node(g, *node, seeds)?;
            let text = bundle.to_json();
            if let Some(path) = out {
                write_file(path, &(text.clone() + "\n"))?;
            }
            if *store {
                let label = format!("{graph}/{node}");
                wallet.add_package(&label, bundle)?;
                wallet.save(&cli.wallet)?;
            }
            Ok(Value::String(text))
        }
        Command::VerifyProof { bundle } => {
            let bundle: ProofBundle = parse_json(&bundle.display().to_string(), &read_file(bundle)?)?;
            let summary = verify_proof(&bundle).map_err(|r| CliError::rejected(r.reason, r.detail))?;
            Ok(to_value(&summary))
        }
        Command::Broadcast { graph } => {
            let wallet = CovenantWallet::load_or_new(&cli.wallet)?;
            let g = wallet.graph(graph).ok_or_else(|| CliError::usage(format!("no graph labelled {graph:?}")))?;
            let txs = g.finalized(&wallet.keyring())?;
            let mut chain = load_chain(&cli.chain)?;
            let result = CovenantGraph::broadcast(&mut chain, &txs);
            save_chain(&cli.chain, &chain)?;
            match result {
                Ok(()) => Ok(
                    json!({ "broadcast": txs.iter().map(Transaction::txid).collect::<Vec<_>>(), "height": chain.height() }),
                ),
                Err((i, r)) => Err(CliError::rejected(r.reason.as_str(), format!("transaction {i}: {r}"))),
            }
        }
        Command::Chain(c) => chain_command(cli, c),
        Command::SizeReport { mechanism, seeded, seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            let mut digest = [0u8; 32];
            rng.fill_bytes(&mut digest);
            let sig = match mechanism {
                Mechanism::DeletedKey => Some(sign(&PrivateKey::generate(&mut rng), &digest)),
                Mechanism::RecoveredKey if *seeded => {
                    let mut seeds = SignatureSeeds { seed_r: vec![0; 32], seed_s: vec![0; 32] };
                    rng.fill_bytes(&mut seeds.seed_r);
                    rng.fill_bytes(&mut seeds.seed_s);
                    Some(seeded_signature(&seeds, &digest).map_err(|e| CliError::rejected("seeded", e))?.0)
                }
                Mechanism::RecoveredKey => Some(nums_signature(&digest).map_err(|e| CliError::rejected("nums", e))?.0),
                Mechanism::Ctv => None,
            };
            let report = size_report(*mechanism, sig.as_ref())?;
            let mut v = to_value(&report);
            v["commitment_bytes"] = json!(report.with_type_byte);
            v["summary"] = json!(format!("commitment bytes = {}", report.with_type_byte));
            Ok(v)
        }
        Command::Export { public, out } => {
            let wallet = CovenantWallet::load_or_new(&cli.wallet)?;
            let wallet = if *public { wallet.export_public() } else { wallet };
            let text = wallet.to_json();
            match out {
                Some(path) => {
                    write_file(path, &(text + "\n"))?;
                    Ok(json!({ "written": path, "watch_only": wallet.is_watch_only() }))
                }
                None => Ok(Value::String(text)),
            }
        }
    }
}

/// Shared setup of the build commands: custodians, destination, funding on the
/// validator, and storage of the resulting graph.
fn build_graph<F>(cli: &Cli, build: &BuildArgs, f: F) -> Result<Value, CliError>
where
    F: FnOnce(&[FundingSource], ChainParams, &mut ChaCha20Rng) -> Result<CovenantGraph, ComposeError>,
{
    build_graph_n(cli, build, 1, None, f)
}

fn build_graph_n<F>(
    cli: &Cli,
    build: &BuildArgs,
    deposits: usize,
    refund_height: Option<u32>,
    f: F,
) -> Result<Value, CliError>
where
    F: FnOnce(&[FundingSource], ChainParams, &mut ChaCha20Rng) -> Result<CovenantGraph, ComposeError>,
{
    let mut wallet = CovenantWallet::load_or_new(&cli.wallet)?;
    let mut chain = load_chain(&cli.chain)?;
    let mut rng = rng_for(build.seed);

    let mut custodians = build.custodian.clone();
    if custodians.is_empty() {
        let label = wallet.next_label("custodian");
        wallet.add_key(&label, PrivateKey::generate(&mut rng), true)?;
        custodians.push(label);
    }
    let keys = custodians
        .iter()
        .map(|l| wallet.keys.iter().find(|k| &k.label == l).map(|k| k.key))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::usage("unknown custodian label"))?;
    let custody = CustodialPolicy::new(build.custody_threshold, keys.clone())?;
    let destination = match &build.destination {
        Some(d) => Script::from_bytes(parse_hex("destination", d)?),
        None => wallet_locking_script(&keys[0]),
    };

    let fee = amount(build.fee)?;
    let mut params = ChainParams::new(build.mechanism, 1, custody, destination);
    params.enforcement_m = build.m;
    params.enforcement_n = build.n;
    params.root_fee = fee;
    params.level_fees = vec![fee];
    params.commitment_type = build.sighash;
    params.refund = refund_height.map(|height| RefundPath { height, key: keys[0] });
    let label = build.label.clone().unwrap_or_else(|| wallet.next_label("graph"));
    if build.seeded {
        if build.mechanism != Mechanism::RecoveredKey {
            return Err(CliError::usage("--seeded applies to recovered-key covenants"));
        }
        let mut seeds = SignatureSeeds { seed_r: vec![0; 32], seed_s: vec![0; 32] };
        rng.fill_bytes(&mut seeds.seed_r);
        rng.fill_bytes(&mut seeds.seed_s);
        wallet.add_seeds(&label, seeds.clone());
        params.style = RecoveredStyle::Seeded(seeds);
    }

    let funding_amount = amount(build.amount)?;
    let fundings: Vec<FundingSource> = (0..deposits)
        .map(|_| FundingSource::mint(&mut chain, PrivateKey::generate(&mut rng), funding_amount))
        .collect();
    let graph = f(&fundings, params, &mut rng)?;
    graph.validate()?;
    let summary = json!({
        "label": label,
        "mechanism": graph.mechanism,
        "roots": graph.roots.iter().map(|r| json!({ "outpoint": r.outpoint().to_string(), "address": r.spec.address().ok() })).collect::<Vec<_>>(),
        "nodes": graph.nodes.iter().map(|n| json!({ "label": n.label, "txid": n.template.transaction.txid() })).collect::<Vec<_>>(),
        "byte_size": graph.byte_size(),
        "tree": graph.render_tree(),
    });
    wallet.add_graph(&label, graph)?;
    wallet.save(&cli.wallet)?;
    save_chain(&cli.chain, &chain)?;
    Ok(summary)
}

/// The proof bundle for the first covenant input of `node`.
pub fn prove_node(graph: &CovenantGraph, node: usize, seeds: Option<SignatureSeeds>) -> Result<ProofBundle, CliError> {
    let n = graph.nodes.get(node).ok_or_else(|| CliError::usage(format!("graph has no node {node}")))?;
    let (index, spec, amount, commitments) = n
        .inputs
        .iter()
        .enumerate()
        .find_map(|(i, inp)| match inp {
            NodeInput::Covenant { spec, amount, commitments, .. } => Some((i, spec, *amount, commitments)),
            NodeInput::Wallet { .. } => None,
        })
        .ok_or_else(|| CliError::usage(format!("node {node} has no covenant input")))?;
    let style = seeds.map_or(RecoveredStyle::Nums, RecoveredStyle::Seeded);
    let bundle = match spec.mechanism() {
        Mechanism::DeletedKey => prove_covenant(
            spec,
            &n.template,
            CovenantEvidence::DeletedKey { amount, signatures: commitments, attestations: &[] },
        )?,
        Mechanism::RecoveredKey => {
            let sig = commitments
                .first()
                .ok_or_else(|| CliError::rejected("covenant", "node has no commitment signature"))?;
            prove_covenant(spec, &n.template, CovenantEvidence::RecoveredKey { signature: sig, style: &style })?
        }
        Mechanism::Ctv => prove_covenant(spec, &n.template, CovenantEvidence::Ctv { input_index: index as u32 })?,
    };
    Ok(bundle)
}

/// Default feerates `1, 2, 4, ...` sat/byte.
pub fn default_feerates(p: usize) -> Vec<u64> {
    (0..p).map(|i| 1u64.checked_shl(i as u32).unwrap_or(u64::MAX)).collect()
}

/// Enumerates fee variants of a deleted-key chain funded on a scratch validator.
/// The rng draws the custodial key, then the funding key, then the enforcers.
pub fn fee_variants(p: usize, t: usize, feerates: &[u64], cap: usize, seed: u64) -> Result<Value, CliError> {
    let feerates = if feerates.is_empty() { default_feerates(p) } else { feerates.to_vec() };
    if feerates.len() != p {
        return Err(CliError::usage(format!("{} feerates given for p = {p}", feerates.len())));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut chain = ChainState::new(ChainConfig::default());
    let custodian = PrivateKey::generate(&mut rng);
    let funding = FundingSource::mint(&mut chain, PrivateKey::generate(&mut rng), amount(10_000_000)?);
    let params = ChainParams::new(
        Mechanism::DeletedKey,
        t,
        CustodialPolicy::single(custodian.public_key()),
        wallet_locking_script(&custodian.public_key()),
    );
    let set = enumerate_fee_variants(&funding, &params, &feerates, cap, &mut rng)?;
    Ok(json!({
        "variants_per_level": p,
        "chain_length": t,
        "feerates": feerates,
        "count": set.count(),
        "byte_size": set.byte_size(),
        "summary": format!("{} variant chains", set.count()),
    }))
}

fn simulate(path: &Path, trace: Option<&Path>, bundle: Option<&Path>) -> Result<Value, CliError> {
    let text = read_file(path)?;
    let scenario: Scenario = parse_json(&path.display().to_string(), &text)?;
    let run = run_scenario(&scenario).map_err(|e| CliError::usage(e.to_string()))?;
    let t = &run.trace;
    if let Some(p) = trace {
        write_file(p, &t.to_json_lines())?;
    }
    if let Some(p) = bundle {
        let (Some(spec), Some(stored)) = (&t.deposit_spec, t.packages.iter().flatten().next()) else {
            return Err(CliError::rejected("no-package", "no custodian holds a package"));
        };
        let b = prove_covenant(
            spec,
            &stored.package.template,
            CovenantEvidence::DeletedKey {
                amount: stored.package.amount,
                signatures: &t.signatures,
                attestations: &t.attestations,
            },
        )?;
        write_file(p, &(b.to_json() + "\n"))?;
    }
    Ok(json!({
        "name": scenario.name,
        "seed": t.seed,
        "outcome": t.outcome,
        "deposit_confirmed": t.deposit_confirmed,
        "leaked": t.leaked,
        "custodians_without_package": t.custodians_without_package(),
        "key_lifetimes": key_lifetime_report(t),
        "end_tick": t.end_tick,
        "events": t.events.len(),
    }))
}

fn chain_command(cli: &Cli, c: &ChainCommand) -> Result<Value, CliError> {
    let path = &cli.chain;
    match c {
        ChainCommand::Init { confirmation_depth, subsidy } => {
            let chain = ChainState::new(ChainConfig {
                confirmation_depth: *confirmation_depth,
                block_subsidy: amount(*subsidy)?,
            });
            save_chain(path, &chain)?;
            Ok(chain_state(&chain))
        }
        ChainCommand::Mint { script, key, amount: sat } => {
            let script = match (script, key) {
                (Some(s), None) => Script::from_bytes(parse_hex("script", s)?),
                (None, Some(label)) => {
                    let wallet = CovenantWallet::load_or_new(&cli.wallet)?;
                    let entry = wallet
                        .keys
                        .iter()
                        .find(|k| &k.label == label)
                        .ok_or_else(|| CliError::usage(format!("no key labelled {label:?}")))?;
                    wallet_locking_script(&entry.key)
                }
                _ => return Err(CliError::usage("give exactly one of --script and --key")),
            };
            let mut chain = load_chain(path)?;
            let outpoint = chain.mint(script, amount(*sat)?);
            save_chain(path, &chain)?;
            Ok(json!({ "outpoint": outpoint.to_string(), "amount": sat }))
        }
        ChainCommand::Submit { tx } => {
            let tx = parse_tx("transaction", tx)?;
            let mut chain = load_chain(path)?;
            let accepted = chain.accept_to_mempool(tx)?;
            save_chain(path, &chain)?;
            Ok(to_value(&accepted))
        }
        ChainCommand::Mine { blocks, capacity } => {
            let mut chain = load_chain(path)?;
            let mut mined = Vec::new();
            for _ in 0..*blocks {
                let b = chain.mine_block(capacity.unwrap_or(usize::MAX));
                mined.push(json!({ "height": b.height, "txids": b.txids() }));
            }
            save_chain(path, &chain)?;
            Ok(json!({ "blocks": mined, "height": chain.height() }))
        }
        ChainCommand::State => Ok(chain_state(&load_chain(path)?)),
    }
}

fn chain_state(chain: &ChainState) -> Value {
    json!({
        "height": chain.height(),
        "utxos": chain.utxos().count(),
        "utxo_total": chain.utxo_total(),
        "minted_total": chain.minted_total(),
        "mempool": chain.mempool().entries().map(|e| json!({ "txid": e.tx.txid(), "fee": e.fee, "size": e.size })).collect::<Vec<_>>(),
    })
}
