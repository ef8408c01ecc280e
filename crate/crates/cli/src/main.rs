//! Command-line tools: framework setup, signing, verification, distributed
//! threshold setup and signing, the aggregator service, and benchmarks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::rngs::OsRng;

use pitpm_aggregator::{
    build_multisig_request, build_threshold_request, AggregatorState, Client, Server,
};
use pitpm_core::group::{Backend, GroupElement};
use pitpm_core::keyset::{
    key_agg, setup, AggregatorSecrets, PublicParams, SignerPacket, SignerSet,
};
use pitpm_core::multisig::{combine, local_sign, verify, MultiSignature, Verdict, VerifierState};
use pitpm_core::threshold::{
    dkg_deal, dkg_finalize, dkg_verify_share, encode_dkg_transcript, reconstruct,
    records_from_deals, threshold_local_sign, threshold_mac_key, verify_threshold, Complaint,
    ThresholdParams, ThresholdShare,
};
use pitpm_core::Seed;

#[derive(Parser)]
#[command(
    name = "pitpm",
    about = "Partially interactive multi-signatures with a trusted aggregator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate public parameters, signer packets, and the aggregator vault.
    Setup {
        /// Number of signers.
        #[arg(long)]
        n: u16,
        /// Group backend: "prod" or "test".
        #[arg(long, default_value = "prod")]
        group: String,
        /// Security parameter in bits.
        #[arg(long, default_value_t = 256)]
        lambda: u32,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce a multi-signature over a message.
    Sign {
        #[arg(long)]
        params: PathBuf,
        /// The signer driving this invocation; its counter store advances.
        #[arg(long)]
        packet: PathBuf,
        #[arg(long)]
        msg: PathBuf,
        /// Comma-separated signer indices.
        #[arg(long)]
        set: String,
        /// Aggregator vault for in-process coordination.
        #[arg(long)]
        vault: Option<PathBuf>,
        /// Aggregator service address for TCP coordination.
        #[arg(long)]
        aggregator: Option<String>,
        /// Directory holding the other members' packets (defaults to the
        /// packet's directory).
        #[arg(long)]
        packets_dir: Option<PathBuf>,
        /// Session counter; defaults to one past the highest stored counter.
        #[arg(long)]
        ctr: Option<u64>,
        #[arg(long, default_value = "out.psig")]
        out: PathBuf,
    },
    /// Verify a multi-signature.
    Verify {
        #[arg(long)]
        sig: PathBuf,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        msg: PathBuf,
    },
    /// Distributed threshold key generation.
    Dkg {
        #[arg(long)]
        t: u16,
        #[arg(long)]
        n: u16,
        #[arg(long, default_value = "prod")]
        group: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce a threshold signature over a message.
    ThresholdSign {
        /// The share driving this invocation.
        #[arg(long)]
        share: PathBuf,
        #[arg(long)]
        set: String,
        #[arg(long)]
        msg: PathBuf,
        /// Threshold parameters (defaults to tparams.bin next to the share).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Threshold seed vault (defaults to tvault.bin next to the share).
        #[arg(long)]
        vault: Option<PathBuf>,
        #[arg(long)]
        shares_dir: Option<PathBuf>,
        #[arg(long)]
        ctr: Option<u64>,
        #[arg(long, default_value = "out.psig")]
        out: PathBuf,
    },
    /// Verify a threshold signature.
    ThresholdVerify {
        #[arg(long)]
        sig: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        msg: PathBuf,
    },
    /// Run the aggregator service.
    Serve {
        #[arg(long)]
        params: PathBuf,
        /// Seed vault path; the PITPM_VAULT environment variable overrides it.
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7744")]
        listen: String,
        /// Serve a threshold deployment described by these parameters.
        #[arg(long)]
        tparams: Option<PathBuf>,
    },
    /// Run the benchmark comparison and write a CSV report.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_backend(name: &str) -> Result<Backend> {
    match name {
        "prod" => Ok(Backend::Prod),
        "test" => Ok(Backend::Test),
        other => bail!("unknown group {other:?}; use \"prod\" or \"test\""),
    }
}

fn parse_set(text: &str) -> Result<Vec<u16>> {
    let indices: Vec<u16> = text
        .split(',')
        .map(|part| part.trim().parse::<u16>())
        .collect::<Result<_, _>>()
        .context("signer set must be comma-separated indices")?;
    if indices.is_empty() {
        bail!("signer set is empty");
    }
    Ok(indices)
}

fn packet_path(dir: &Path, index: u16) -> PathBuf {
    dir.join(format!("signer{index}.bin"))
}

fn share_path(dir: &Path, index: u16) -> PathBuf {
    dir.join(format!("{index}.bin"))
}

fn load_packet(path: &Path) -> Result<SignerPacket> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading packet {}", path.display()))?;
    Ok(SignerPacket::from_file_string(&text)?)
}

fn load_share(path: &Path) -> Result<ThresholdShare> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading share {}", path.display()))?;
    Ok(ThresholdShare::from_file_string(&text)?)
}

fn load_vault(path: &Path) -> Result<AggregatorSecrets> {
    let bytes = std::fs::read(path).with_context(|| format!("reading vault {}", path.display()))?;
    Ok(AggregatorSecrets::decode(&bytes)?)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct KeysFile {
    group: String,
    keys: BTreeMap<String, String>,
}

fn write_keys_file(path: &Path, backend: Backend, packets: &[SignerPacket]) -> Result<()> {
    let keys = packets
        .iter()
        .map(|p| (p.index.to_string(), hex::encode(p.public_key().encode())))
        .collect();
    let file = KeysFile {
        group: match backend {
            Backend::Prod => "prod".into(),
            Backend::Test => "test".into(),
        },
        keys,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

fn read_keys_file(path: &Path) -> Result<(Backend, BTreeMap<u16, GroupElement>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading keys {}", path.display()))?;
    let file: KeysFile = serde_json::from_str(&text)?;
    let backend = parse_backend(&file.group)?;
    let mut keys = BTreeMap::new();
    for (index, pk_hex) in &file.keys {
        let index: u16 = index.parse().context("key index")?;
        let pk = GroupElement::decode(backend, &hex::decode(pk_hex)?)?;
        keys.insert(index, pk);
    }
    Ok((backend, keys))
}

fn cmd_setup(n: u16, group: String, lambda: u32, out: PathBuf) -> Result<()> {
    let backend = parse_backend(&group)?;
    let (pp, packets, secrets) = setup(lambda, n, backend)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("pp.bin"), pp.encode())?;
    std::fs::write(out.join("vault.bin"), secrets.encode())?;
    for packet in &packets {
        std::fs::write(packet_path(&out, packet.index), packet.to_file_string())?;
    }
    write_keys_file(&out.join("keys.json"), backend, &packets)?;
    println!(
        "setup complete: {n} signers, group {group}, aggregation-seed fingerprint {}",
        hex::encode(secrets.seed_agg_fingerprint())
    );
    println!(
        "wrote pp.bin, vault.bin, keys.json, and signer packets under {}",
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sign(
    params: PathBuf,
    packet: PathBuf,
    msg: PathBuf,
    set: String,
    vault: Option<PathBuf>,
    aggregator: Option<String>,
    packets_dir: Option<PathBuf>,
    ctr: Option<u64>,
    out: PathBuf,
) -> Result<()> {
    let pp_bytes = std::fs::read(&params).context("reading params")?;
    let pp = PublicParams::decode(&pp_bytes)?;
    let backend = pp.group;
    let message = std::fs::read(&msg).context("reading message")?;
    let indices = parse_set(&set)?;

    let dir = packets_dir
        .or_else(|| packet.parent().map(Path::to_path_buf))
        .ok_or_else(|| anyhow!("cannot determine packets directory"))?;
    let perspective = load_packet(&packet)?;
    let mut packets: BTreeMap<u16, SignerPacket> = BTreeMap::new();
    for &index in &indices {
        let p = if index == perspective.index {
            perspective.clone()
        } else {
            load_packet(&packet_path(&dir, index))?
        };
        packets.insert(index, p);
    }

    let signer_set = SignerSet::new(
        packets
            .values()
            .map(|p| (p.index, p.public_key().clone()))
            .collect(),
    )?;
    let digest = signer_set.digest();
    let ctr = ctr.unwrap_or_else(|| {
        packets
            .values()
            .filter_map(|p| p.stored_counter(&digest))
            .max()
            .map_or(1, |c| c.saturating_add(1))
    });

    // coordination: in-process against the vault, or over TCP
    let bundles: BTreeMap<u16, pitpm_core::multisig::CommitmentBundle> = match (&vault, &aggregator)
    {
        (Some(vault_path), _) => {
            let secrets = load_vault(vault_path)?;
            let mut state = AggregatorState::from_secrets(&secrets, pp.aggregator_id.clone());
            let mut bundles = BTreeMap::new();
            for p in packets.values() {
                let req = build_multisig_request(&signer_set, &message, ctr, p.index, p.mac_key());
                bundles.insert(p.index, state.serve_commitment(&req)?);
            }
            bundles
        }
        (None, Some(addr)) => {
            let mut bundles = BTreeMap::new();
            for p in packets.values() {
                let mut client = Client::connect(addr.as_str(), backend)?;
                let req = build_multisig_request(&signer_set, &message, ctr, p.index, p.mac_key());
                let bundle = client
                    .request_commitment(&req)
                    .map_err(|e| anyhow!("aggregator request failed: {e}"))?;
                bundles.insert(p.index, bundle);
            }
            bundles
        }
        (None, None) => bail!("need either --vault or --aggregator for coordination"),
    };

    // the aggregation seed is only needed vault-side; over TCP the published
    // coefficients come from the vault copy distributed at setup
    let seed_agg = match &vault {
        Some(vault_path) => load_vault(vault_path)?.seed_agg,
        None => {
            // TCP mode still needs the coefficients; look for a local vault
            let fallback = dir.join("vault.bin");
            load_vault(&fallback)
                .context("TCP signing needs the setup vault for the aggregation coefficients")?
                .seed_agg
        }
    };
    let agg = key_agg(&signer_set, &seed_agg)?;

    let mut shares = Vec::new();
    for (&index, p) in packets.iter_mut() {
        shares.push(local_sign(
            p,
            &message,
            &bundles[&index],
            &agg,
            &signer_set,
        )?);
    }
    let reference = bundles
        .values()
        .next()
        .ok_or_else(|| anyhow!("no bundles served"))?;
    let sig = combine(&shares, reference, &agg, &signer_set, &message)?;
    std::fs::write(&out, sig.encode())?;

    // persist advanced counter stores
    for p in packets.values() {
        let path = if p.index == perspective.index {
            packet.clone()
        } else {
            packet_path(&dir, p.index)
        };
        std::fs::write(path, p.to_file_string())?;
    }
    println!(
        "signed {} bytes with set [{}] at counter {ctr}; wrote {}",
        message.len(),
        set,
        out.display()
    );
    Ok(())
}

fn cmd_verify(sig: PathBuf, keys: PathBuf, msg: PathBuf) -> Result<i32> {
    let (backend, pks) = read_keys_file(&keys)?;
    let sig_bytes = std::fs::read(&sig).context("reading signature")?;
    let signature = MultiSignature::decode(backend, &sig_bytes)?;
    let message = std::fs::read(&msg).context("reading message")?;
    match verify(&message, &signature, &pks, None, &mut VerifierState::new()) {
        Verdict::Accept => {
            println!("ACCEPT");
            Ok(0)
        }
        Verdict::Reject(reason) => {
            println!("REJECT: {reason:?}");
            Ok(2)
        }
    }
}

fn cmd_dkg(t: u16, n: u16, group: String, out: PathBuf) -> Result<()> {
    let backend = parse_backend(&group)?;
    let mut rng = OsRng;
    std::fs::create_dir_all(&out)?;

    let mut deals = Vec::new();
    for dealer in 1..=n {
        deals.push(dkg_deal(dealer, t, n, backend, &mut rng)?);
    }
    let mut complaints: Vec<Complaint> = Vec::new();
    for deal in &deals {
        for k in 1..=n {
            let (ok, complaint) = dkg_verify_share(
                k,
                &deal.shares[&k],
                &deal.phi_commitments,
                &deal.psi_commitments,
            );
            if !ok {
                let mut complaint = complaint.expect("complaint accompanies failure");
                complaint.dealer = deal.dealer;
                complaints.push(complaint);
            }
        }
    }
    let transcript = encode_dkg_transcript(&records_from_deals(&deals));
    std::fs::write(out.join("transcript.bin"), transcript)?;
    let (params, shares, seeds) = dkg_finalize(&deals, &complaints, t, n)?;

    std::fs::write(out.join("tparams.bin"), params.encode())?;
    for share in &shares {
        std::fs::write(share_path(&out, share.index), share.to_file_string())?;
    }
    // threshold seed vault: signer seeds plus channel MAC keys; the master and
    // aggregation slots are unused in threshold deployments
    let secrets = AggregatorSecrets {
        group: backend,
        master_seed: Seed::random(&mut OsRng),
        seed_agg: Seed::random(&mut OsRng),
        signer_seeds: seeds.clone(),
        mac_keys: seeds
            .iter()
            .map(|(i, s)| (*i, threshold_mac_key(s)))
            .collect(),
        operator_key: Seed::random(&mut OsRng),
    };
    std::fs::write(out.join("tvault.bin"), secrets.encode())?;
    println!(
        "dkg complete: ({t},{n}) over group {group}; master public key {}",
        hex::encode(params.mpk.encode())
    );
    println!(
        "wrote tparams.bin, tvault.bin, transcript.bin, and shares under {}",
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_threshold_sign(
    share: PathBuf,
    set: String,
    msg: PathBuf,
    params: Option<PathBuf>,
    vault: Option<PathBuf>,
    shares_dir: Option<PathBuf>,
    ctr: Option<u64>,
    out: PathBuf,
) -> Result<()> {
    let dir = shares_dir
        .or_else(|| share.parent().map(Path::to_path_buf))
        .ok_or_else(|| anyhow!("cannot determine shares directory"))?;
    let params_path = params.unwrap_or_else(|| dir.join("tparams.bin"));
    let vault_path = vault.unwrap_or_else(|| dir.join("tvault.bin"));
    let tparams = ThresholdParams::decode(&std::fs::read(&params_path)?)?;
    let secrets = load_vault(&vault_path)?;
    let message = std::fs::read(&msg).context("reading message")?;
    let indices: BTreeSet<u16> = parse_set(&set)?.into_iter().collect();

    let perspective = load_share(&share)?;
    let mut member_shares: BTreeMap<u16, ThresholdShare> = BTreeMap::new();
    for &index in &indices {
        let s = if index == perspective.index {
            perspective.clone()
        } else {
            load_share(&share_path(&dir, index))?
        };
        member_shares.insert(index, s);
    }

    let digest = pitpm_core::threshold::index_set_digest(&indices);
    let ctr = ctr.unwrap_or_else(|| {
        member_shares
            .values()
            .filter_map(|s| s.stored_counter(&digest))
            .max()
            .map_or(1, |c| c.saturating_add(1))
    });

    let mut state = AggregatorState::for_threshold(
        tparams.group,
        secrets.signer_seeds.clone(),
        secrets.operator_key.clone(),
        tparams.t,
        tparams.aggregator_id.clone(),
    );
    let mut sig_shares = Vec::new();
    let mut reference_bundle = None;
    for (&index, member) in member_shares.iter_mut() {
        let req = build_threshold_request(&indices, &message, ctr, index, member.mac_key());
        let bundle = state.serve_commitment(&req)?;
        sig_shares.push(threshold_local_sign(
            member, &message, &bundle, &tparams, &indices,
        )?);
        reference_bundle = Some(bundle);
    }
    let bundle = reference_bundle.ok_or_else(|| anyhow!("no bundle served"))?;
    let nonces = state
        .session_nonces(&digest, ctr)
        .cloned()
        .ok_or_else(|| anyhow!("aggregator session missing"))?;
    let sig = reconstruct(
        &sig_shares,
        &bundle,
        &tparams,
        &indices,
        &message,
        Some(&nonces),
    )?;
    std::fs::write(&out, sig.encode())?;

    for member in member_shares.values() {
        let path = if member.index == perspective.index {
            share.clone()
        } else {
            share_path(&dir, member.index)
        };
        std::fs::write(path, member.to_file_string())?;
    }
    println!(
        "threshold-signed with T=[{set}] at counter {ctr}; wrote {}",
        out.display()
    );
    Ok(())
}

fn cmd_threshold_verify(sig: PathBuf, params: PathBuf, msg: PathBuf) -> Result<i32> {
    let tparams = ThresholdParams::decode(&std::fs::read(&params)?)?;
    let signature = MultiSignature::decode(tparams.group, &std::fs::read(&sig)?)?;
    let message = std::fs::read(&msg)?;
    match verify_threshold(&message, &signature, &tparams, &mut VerifierState::new()) {
        Verdict::Accept => {
            println!("ACCEPT");
            Ok(0)
        }
        Verdict::Reject(reason) => {
            println!("REJECT: {reason:?}");
            Ok(2)
        }
    }
}

fn cmd_serve(
    params: PathBuf,
    seeds: PathBuf,
    listen: String,
    tparams: Option<PathBuf>,
) -> Result<()> {
    let vault_path = std::env::var_os("PITPM_VAULT")
        .map(PathBuf::from)
        .unwrap_or(seeds);
    let secrets = load_vault(&vault_path)?;
    let state = match tparams {
        Some(tparams_path) => {
            let tparams = ThresholdParams::decode(&std::fs::read(&tparams_path)?)?;
            AggregatorState::for_threshold(
                tparams.group,
                secrets.signer_seeds.clone(),
                secrets.operator_key.clone(),
                tparams.t,
                tparams.aggregator_id.clone(),
            )
        }
        None => {
            let pp = PublicParams::decode(&std::fs::read(&params)?)?;
            AggregatorState::from_secrets(&secrets, pp.aggregator_id)
        }
    };
    println!("serving on {listen} with vault {}", vault_path.display());
    Server::run_blocking(listen.as_str(), Arc::new(Mutex::new(state)))?;
    Ok(())
}

fn cmd_bench(config: PathBuf, out: PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(&config).context("reading config")?;
    let parsed = pitpm_harness::parse_config(&text)?;
    let csv = pitpm_harness::run_bench(&parsed)?;
    std::fs::write(&out, &csv)?;
    println!("{csv}");
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    let exit = match cli.command {
        Command::Setup {
            n,
            group,
            lambda,
            out,
        } => {
            cmd_setup(n, group, lambda, out)?;
            0
        }
        Command::Sign {
            params,
            packet,
            msg,
            set,
            vault,
            aggregator,
            packets_dir,
            ctr,
            out,
        } => {
            cmd_sign(
                params,
                packet,
                msg,
                set,
                vault,
                aggregator,
                packets_dir,
                ctr,
                out,
            )?;
            0
        }
        Command::Verify { sig, keys, msg } => cmd_verify(sig, keys, msg)?,
        Command::Dkg { t, n, group, out } => {
            cmd_dkg(t, n, group, out)?;
            0
        }
        Command::ThresholdSign {
            share,
            set,
            msg,
            params,
            vault,
            shares_dir,
            ctr,
            out,
        } => {
            cmd_threshold_sign(share, set, msg, params, vault, shares_dir, ctr, out)?;
            0
        }
        Command::ThresholdVerify { sig, params, msg } => cmd_threshold_verify(sig, params, msg)?,
        Command::Serve {
            params,
            seeds,
            listen,
            tparams,
        } => {
            cmd_serve(params, seeds, listen, tparams)?;
            0
        }
        Command::Bench { config, out } => {
            cmd_bench(config, out)?;
            0
        }
    };
    std::process::exit(exit);
}
