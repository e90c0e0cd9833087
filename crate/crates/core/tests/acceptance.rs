//! Acceptance suite: one pass/fail line per criterion.
//!
//! Every check compares library output against an oracle computed here from
//! first principles. The process exits non-zero when any criterion fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::process::ExitCode;
use std::time::Instant;

use num_rational::Ratio;
use rand::Rng;
use specmer::analysis::{
    bootstrap_mean_difference, estimate_misranking, expected_speedup, expected_speedup_batch, expected_speedup_serial,
    library_nll, quantile_sorted, simulate_speedup, speedup, PhaseCosts, SpeedupMode, SpeedupParams,
};
use specmer::coupling::residual;
use specmer::decode::{
    generate_library, guided_generate, speculative_generate, specmer_generate, CandidateScorer, DecodeConfig,
    DecodeTrace, GenerationResult, LibraryInputs, LibraryKind, WarpMode,
};
use specmer::kmer::{build_index, KmerIndex};
use specmer::lm::{Distribution, LanguageModel, NgramModel, SamplerConfig, TableModel};
use specmer::msa::{parse_fasta, write_fasta};
use specmer::oracle::{check_coupling, coupling_marginal, exact_model_distribution, speculative_counts};
use specmer::rng::{derive_seed, stream, Purpose};
use specmer::sweep::{run_sweep, SweepGrid};
use specmer::vocab::{TokenId, TokenSequence, Vocabulary, AMINO_ACIDS};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(major: u64) -> specmer::rng::Rng {
    stream(0xACCE, Purpose::Test, major, 0)
}

fn random_weights(r: &mut impl Rng, n: usize, zero_chance: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> =
            (0..n).map(|_| if r.random::<f64>() < zero_chance { 0.0 } else { r.random::<f64>() }).collect();
        if w.iter().any(|&x| x > 0.0) {
            let s: f64 = w.iter().sum();
            return w.iter().map(|x| x / s).collect();
        }
    }
}

// ---------------------------------------------------------------------------
// 1. coupling marginal
// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    const PAIRS: usize = 50;
    const TRIALS: u64 = 1_000_000;
    let mut r = rng(1);
    let (mut worst_exact, mut worst_z, mut tokens) = (0.0f64, 0.0f64, 0);
    for pair in 0..PAIRS {
        let n = 2 + pair % 5;
        let p = Distribution::new(random_weights(&mut r, n, 0.15)).map_err(|e| e.to_string())?;
        let q = Distribution::new(random_weights(&mut r, n, 0.15)).map_err(|e| e.to_string())?;

        // Independent oracle: accept x with min(1, q/p), else draw from the
        // normalised positive part of q - p.
        let excess: Vec<f64> = q.probs().iter().zip(p.probs()).map(|(a, b)| (a - b).max(0.0)).collect();
        let z: f64 = excess.iter().sum();
        let mut oracle = vec![0.0; n];
        let mut reject = 0.0;
        for ((o, &px), &qx) in oracle.iter_mut().zip(p.probs()).zip(q.probs()) {
            if px == 0.0 {
                continue;
            }
            let a = (qx / px).min(1.0);
            *o += px * a;
            reject += px * (1.0 - a);
        }
        if z > 0.0 {
            for (o, e) in oracle.iter_mut().zip(&excess) {
                *o += reject * e / z;
            }
            let res = residual(&p, &q).map_err(|e| e.to_string())?;
            for (r, e) in res.probs().iter().zip(&excess) {
                ensure((r - e / z).abs() < 1e-12, || format!("pair {pair}: residual differs"))?;
            }
        }
        let library = coupling_marginal(&p, &q).map_err(|e| e.to_string())?;
        for y in 0..n {
            let e = (library[y] - q.probs()[y]).abs().max((oracle[y] - q.probs()[y]).abs());
            worst_exact = worst_exact.max(e);
        }
        ensure(worst_exact <= 1e-12, || format!("pair {pair}: exact marginal off by {worst_exact:e}"))?;

        let mc = check_coupling(&p, &q, TRIALS, pair as u64).map_err(|e| e.to_string())?;
        ensure(mc.counts.iter().sum::<u64>() == TRIALS, || "trial count mismatch".into())?;
        for (y, &c) in mc.counts.iter().enumerate() {
            let t = q.probs()[y];
            let se = (t * (1.0 - t) / TRIALS as f64).sqrt();
            let dev = (c as f64 / TRIALS as f64 - t).abs();
            let zv = if se > 0.0 { dev / se } else if dev > 0.0 { f64::INFINITY } else { 0.0 };
            worst_z = worst_z.max(zv);
            tokens += 1;
        }
        ensure(worst_z <= 4.0, || format!("pair {pair}: Monte Carlo deviation {worst_z:.2} se"))?;
    }
    Ok(format!(
        "{PAIRS} pairs, {tokens} tokens: max exact deviation {worst_exact:.1e}, max MC deviation {worst_z:.2} se at {TRIALS} draws"
    ))
}

// ---------------------------------------------------------------------------
// 2. sequence-level distribution preservation
// ---------------------------------------------------------------------------

/// Corpus drawn from a random first-order chain with skewed transitions.
fn chain_corpus(v: &Vocabulary, seed: u64, rows: usize, len: usize) -> Vec<TokenSequence> {
    let mut r = stream(seed, Purpose::Test, 2, 0);
    let n = v.len();
    let skew = |r: &mut specmer::rng::Rng| -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| r.random::<f64>().powi(3)).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    };
    let rows_t: Vec<Vec<f64>> = (0..n).map(|_| skew(&mut r)).collect();
    let draw = |r: &mut specmer::rng::Rng, w: &[f64]| -> usize {
        let u = r.random::<f64>();
        let mut acc = 0.0;
        for (i, &x) in w.iter().enumerate() {
            acc += x;
            if u < acc {
                return i;
            }
        }
        n - 1
    };
    (0..rows)
        .map(|_| {
            let mut s = String::new();
            let mut cur = r.random_range(0..n);
            for _ in 0..len {
                s.push_str(&v.symbols()[cur]);
                cur = draw(&mut r, &rows_t[cur]);
            }
            v.encode(&s).unwrap()
        })
        .collect()
}

/// Chain-rule probability of every length-`len` string, computed directly.
fn enumerate_chain(model: &dyn LanguageModel, len: usize) -> HashMap<Vec<TokenId>, f64> {
    let n = model.vocab().len() as TokenId;
    let mut out = HashMap::new();
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 1.0)];
    while let Some((prefix, p)) = stack.pop() {
        if prefix.len() == len {
            out.insert(prefix, p);
            continue;
        }
        let d = model.next_distribution(&prefix).unwrap();
        for t in 0..n {
            let mut next = prefix.clone();
            next.push(t);
            stack.push((next, p * d.prob(t)));
        }
    }
    out
}

/// Pearson statistic with cells pooled in ascending expected count until each
/// pool expects at least five.
fn chi_square_p(counts: &HashMap<Vec<TokenId>, u64>, exact: &HashMap<Vec<TokenId>, f64>, n: u64) -> f64 {
    let mut cells: Vec<(f64, f64)> =
        exact.iter().map(|(k, &p)| (p * n as f64, *counts.get(k).unwrap_or(&0) as f64)).collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pools: Vec<(f64, f64)> = Vec::new();
    let (mut e, mut o) = (0.0, 0.0);
    for (ei, oi) in cells {
        e += ei;
        o += oi;
        if e >= 5.0 {
            pools.push((e, o));
            e = 0.0;
            o = 0.0;
        }
    }
    if e > 0.0 {
        match pools.last_mut() {
            Some(last) => {
                last.0 += e;
                last.1 += o;
            }
            None => pools.push((e, o)),
        }
    }
    let stat: f64 = pools.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
    let dof = pools.len().saturating_sub(1).max(1) as f64;
    ChiSquared::new(dof).unwrap().sf(stat)
}

fn criterion_2() -> Outcome {
    let v = Vocabulary::residues_only("ACDE").map_err(|e| e.to_string())?;
    let draft = NgramModel::train(&chain_corpus(&v, 21, 60, 12), 2, 0.5, &v, false).map_err(|e| e.to_string())?;
    let target = NgramModel::train(&chain_corpus(&v, 22, 60, 12), 3, 0.5, &v, false).map_err(|e| e.to_string())?;
    let exact = enumerate_chain(&target, 4);
    let library_exact = exact_model_distribution(&target, &[], 4, &SamplerConfig::ANCESTRAL).map_err(|e| e.to_string())?;
    ensure(library_exact.len() == exact.len(), || "oracle supports differ".into())?;
    for (k, p) in &exact {
        ensure((library_exact.prob(k) - p).abs() < 1e-12, || format!("exact probability of {k:?} differs"))?;
    }
    let cfg = DecodeConfig { draft_len: 2, max_len: 4, sampler: SamplerConfig::ANCESTRAL, ..Default::default() };

    let mut alpha = (0u64, 0u64);
    for i in 0..2000 {
        let r = speculative_generate(&draft, &target, &DecodeConfig { seed: 1_000_000 + i, ..cfg.clone() })
            .map_err(|e| e.to_string())?;
        alpha.0 += r.trace.accepted;
        alpha.1 += r.trace.rejected;
    }
    let alpha = alpha.0 as f64 / (alpha.0 + alpha.1) as f64;

    const BIG: u64 = 1_000_000;
    let counts = speculative_counts(&draft, &target, &DecodeConfig { seed: 1, ..cfg.clone() }, BIG)
        .map_err(|e| e.to_string())?;
    let tv = 0.5
        * exact
            .iter()
            .map(|(k, p)| (*counts.get(k).unwrap_or(&0) as f64 / BIG as f64 - p).abs())
            .sum::<f64>()
        + 0.5 * counts.iter().filter(|(k, _)| !exact.contains_key(*k)).map(|(_, &c)| c as f64 / BIG as f64).sum::<f64>();
    ensure(tv < 0.02, || format!("TV {tv:.4} at {BIG} generations"))?;

    const REPEAT: u64 = 100_000;
    let mut passed = 0;
    let mut ps = Vec::new();
    for rep in 0..20 {
        let counts = speculative_counts(&draft, &target, &DecodeConfig { seed: 100 + rep, ..cfg.clone() }, REPEAT)
            .map_err(|e| e.to_string())?;
        let p = chi_square_p(&counts, &exact, REPEAT);
        ps.push(p);
        if p > 0.01 {
            passed += 1;
        }
    }
    ensure(passed >= 18, || format!("chi-square p > 0.01 in only {passed}/20 repeats: {ps:?}"))?;
    let min_p = ps.iter().cloned().fold(1.0, f64::min);
    Ok(format!(
        "acceptance {alpha:.3}; TV {tv:.4} at {BIG} generations; chi-square p > 0.01 in {passed}/20 repeats of {REPEAT} (min p {min_p:.3})"
    ))
}

// ---------------------------------------------------------------------------
// shared protein fixtures
// ---------------------------------------------------------------------------

const MOTIFS: [&str; 3] = ["WCHMY", "PKRFD", "GQSTE"];
const SEQ_LEN: usize = 60;
const MOTIF_COPIES: usize = 3;

/// Sequences of uniform background residues with each motif embedded
/// `copies` times in shuffled, non-overlapping slots.
fn motif_corpus(rows: usize, len: usize, copies: usize, seed: u64) -> Vec<String> {
    let mut r = stream(seed, Purpose::Test, 7, 0);
    let aa: Vec<char> = AMINO_ACIDS.chars().collect();
    (0..rows)
        .map(|_| {
            let mut s: Vec<char> = (0..len).map(|_| aa[r.random_range(0..aa.len())]).collect();
            let mut order: Vec<usize> = (0..MOTIFS.len() * copies).map(|i| i % MOTIFS.len()).collect();
            let slot = len / order.len();
            for i in (1..order.len()).rev() {
                order.swap(i, r.random_range(0..=i));
            }
            for (b, &m) in order.iter().enumerate() {
                let start = b * slot + r.random_range(0..=slot - 5);
                for (j, ch) in MOTIFS[m].chars().enumerate() {
                    s[start + j] = ch;
                }
            }
            s.into_iter().collect()
        })
        .collect()
}

struct ProteinSetup {
    vocab: Vocabulary,
    draft: NgramModel,
    target: NgramModel,
    index: KmerIndex,
}

fn protein_setup() -> Result<ProteinSetup, String> {
    let vocab = Vocabulary::protein();
    let rows = motif_corpus(200, SEQ_LEN, MOTIF_COPIES, 70);
    let fasta: String = rows.iter().enumerate().map(|(i, s)| format!(">m{i}\n{s}\n")).collect();
    let msa = parse_fasta(fasta.as_bytes()).map_err(|e| e.to_string())?;
    let (seqs, _) = msa.ungapped(&vocab);
    let draft = NgramModel::train(&seqs, 2, 1.0, &vocab, false).map_err(|e| e.to_string())?;
    let target = NgramModel::train(&seqs, 4, 0.1, &vocab, false).map_err(|e| e.to_string())?;
    let index = build_index(&msa, &[1, 3, 5], &vocab).map_err(|e| e.to_string())?;
    Ok(ProteinSetup { vocab, draft, target, index })
}

// ---------------------------------------------------------------------------
// 3. reduction property
// ---------------------------------------------------------------------------

fn fasta_bytes(vocab: &Vocabulary, results: &[GenerationResult]) -> Vec<u8> {
    let mut out = Vec::new();
    write_fasta(
        &mut out,
        results.iter().enumerate().map(|(i, r)| (format!("s{i}"), vocab.decode(&r.sequence))),
        60,
    )
    .unwrap();
    out
}

fn criterion_3(s: &ProteinSetup) -> Outcome {
    let context = s.vocab.encode("MSK").unwrap();
    let configs = [
        DecodeConfig { draft_len: 5, k_values: vec![1, 3], max_len: 40, ..Default::default() },
        DecodeConfig {
            draft_len: 10,
            k_values: vec![1],
            sampler: SamplerConfig::new(0.7, 0.95).unwrap(),
            max_len: 30,
            context: context.clone(),
            ..Default::default()
        },
        DecodeConfig {
            draft_len: 3,
            k_values: vec![1, 3, 5],
            sampler: SamplerConfig::new(1.4, 1.0).unwrap(),
            max_len: 25,
            bonus_token: false,
            ..Default::default()
        },
        DecodeConfig {
            draft_len: 15,
            k_values: vec![3],
            sampler: SamplerConfig::new(1.0, 0.8).unwrap(),
            max_len: 50,
            warp_mode: WarpMode::TargetOnly,
            context,
            ..Default::default()
        },
        DecodeConfig {
            draft_len: 1,
            k_values: vec![5],
            sampler: SamplerConfig::ANCESTRAL,
            max_len: 20,
            boundary_windows: false,
            ..Default::default()
        },
    ];
    let mut checked = 0;
    for (ci, base) in configs.iter().enumerate() {
        let index = s.index.restrict(&base.k_values).map_err(|e| e.to_string())?;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for seed in 0..100u64 {
            let cfg = DecodeConfig { seed: seed * 7919 + ci as u64, ..base.clone() };
            let x = specmer_generate(&s.draft, &s.target, &index, &cfg).map_err(|e| e.to_string())?;
            let y = speculative_generate(&s.draft, &s.target, &cfg).map_err(|e| e.to_string())?;
            ensure(x.trace.iterations == y.trace.iterations, || format!("config {ci} seed {seed}: traces differ"))?;
            a.push(x);
            b.push(y);
            checked += 1;
        }
        let (fa, fb) = (fasta_bytes(&s.vocab, &a), fasta_bytes(&s.vocab, &b));
        ensure(fa == fb, || format!("config {ci}: FASTA output differs"))?;
    }
    Ok(format!("{checked} generations over 5 configurations byte-identical with matching traces"))
}

// ---------------------------------------------------------------------------
// 4. batch acceptance and misranking
// ---------------------------------------------------------------------------

/// Scores a candidate by whether its first token is acceptable under the
/// synthetic pair (sign flips the preference).
struct FirstTokenScorer {
    acceptable: HashSet<TokenId>,
    sign: f64,
}

impl CandidateScorer for FirstTokenScorer {
    fn score(&self, candidate: &[TokenId], _: &[TokenId]) -> f64 {
        let hit = candidate.first().is_some_and(|t| self.acceptable.contains(t));
        self.sign * if hit { 1.0 } else { 0.0 }
    }
}

struct Synthetic {
    draft: TableModel,
    target: TableModel,
    acceptable: HashSet<TokenId>,
}

/// Draft uniform over `n` tokens, target uniform over the first `support`, so
/// a drafted token is accepted exactly when it lies in the target support
/// (α = support / n).
fn synthetic(n: usize, support: usize) -> Result<Synthetic, String> {
    let v = Vocabulary::residues_only(&AMINO_ACIDS[..n]).map_err(|e| e.to_string())?;
    let q: Vec<f64> = (0..n).map(|i| if i < support { 1.0 / support as f64 } else { 0.0 }).collect();
    let draft = TableModel::uniform(v.clone());
    let target = TableModel::new(v, Distribution::new(q).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    Ok(Synthetic { draft, target, acceptable: (0..support as TokenId).collect() })
}

fn traces(
    syn: &Synthetic,
    scorer: Option<&FirstTokenScorer>,
    m: usize,
    seed: u64,
) -> Result<Vec<DecodeTrace>, String> {
    (0..200u64)
        .map(|i| {
            let cfg = DecodeConfig {
                draft_len: 1,
                candidates: m,
                sampler: SamplerConfig::ANCESTRAL,
                max_len: 150,
                seed: derive_seed(seed, Purpose::Sequence, i),
                ..Default::default()
            };
            let r = match scorer {
                Some(sc) => guided_generate(&syn.draft, &syn.target, sc, &cfg),
                None => speculative_generate(&syn.draft, &syn.target, &cfg),
            };
            r.map(|g| g.trace).map_err(|e| e.to_string())
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut lines = Vec::new();
    for (ai, &alpha) in [0.3, 0.5, 0.8].iter().enumerate() {
        let syn = synthetic(10, (alpha * 10.0_f64).round() as usize)?;
        let vanilla = traces(&syn, None, 1, 400 + ai as u64)?;
        for &m in &[2usize, 3, 5] {
            let oracle = FirstTokenScorer { acceptable: syn.acceptable.clone(), sign: 1.0 };
            let specmer = traces(&syn, Some(&oracle), m, 500 + (ai * 10 + m) as u64)?;
            let e = estimate_misranking(&vanilla, &specmer, m, 1000, 9).map_err(|e| e.to_string())?;
            let target = 1.0 - (1.0 - alpha).powi(m as i32);
            let z = (e.expected_accept - target).abs() / e.expected_accept_se.max(f64::MIN_POSITIVE);
            ensure(z <= 3.0, || format!("alpha {alpha}, m {m}: E[A*] {:.4} vs {target:.4} ({z:.2} se)", e.expected_accept))?;
            ensure(e.epsilon <= 2.0 * e.epsilon_se, || {
                format!("alpha {alpha}, m {m}: epsilon {:.4} exceeds 2 se ({:.4})", e.epsilon, e.epsilon_se)
            })?;
            lines.push(format!("a={alpha} m={m}: E[A*] {:.4}/{target:.4}, eps {:+.4}±{:.4}", e.expected_accept, e.epsilon, e.epsilon_se));
        }
    }
    // Adversarial: prefer a rejectable candidate on two tokens, p uniform and
    // q a point mass. With m = 2 the loss is P(exactly one acceptable) · 1.
    let syn = synthetic(2, 1)?;
    let p_one: f64 = 2.0 * 0.5 * 0.5;
    let vanilla = traces(&syn, None, 1, 600)?;
    let adversary = FirstTokenScorer { acceptable: syn.acceptable.clone(), sign: -1.0 };
    let specmer = traces(&syn, Some(&adversary), 2, 601)?;
    let e = estimate_misranking(&vanilla, &specmer, 2, 1000, 9).map_err(|e| e.to_string())?;
    let z = (e.epsilon - p_one).abs() / e.epsilon_se;
    ensure(z <= 3.0, || format!("adversarial epsilon {:.4} vs {p_one} ({z:.2} se)", e.epsilon))?;
    lines.push(format!("adversarial eps {:.4} vs {p_one} ({z:.2} se)", e.epsilon));

    // A single candidate involves no ranking.
    let single = traces(&syn, Some(&adversary), 1, 602)?;
    let e = estimate_misranking(&vanilla, &single, 1, 1000, 9).map_err(|e| e.to_string())?;
    ensure(e.epsilon.abs() <= 3.0 * e.epsilon_se, || format!("m=1 epsilon {:.4}", e.epsilon))?;
    lines.push(format!("m=1 eps {:+.4}", e.epsilon));
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------------------
// 5. speedup theory
// ---------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    const ITER: usize = 100_000;
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for (i, &alpha) in [0.3, 0.6, 0.9].iter().enumerate() {
        for (j, &gamma) in [1usize, 5, 10].iter().enumerate() {
            for (k, &ce) in [0.05, 0.2, 0.5].iter().enumerate() {
                let p = SpeedupParams { alpha, gamma, candidates: 3, ce, xi: 1.5 };
                // Expected tokens per iteration from the acceptance series.
                let tokens: f64 = (0..=gamma).map(|n| alpha.powi(n as i32)).sum();
                let closed = [
                    (SpeedupMode::Vanilla, tokens / (gamma as f64 * ce + 1.0)),
                    (SpeedupMode::Batch, tokens / (ce + 1.0)),
                    (SpeedupMode::Serial, tokens / (3.0 / 1.5 * ce + 1.0)),
                ];
                for (mode, truth) in closed {
                    ensure((speedup(&p, mode) - truth).abs() < 1e-12, || format!("{mode:?} formula at {p:?}"))?;
                    let costs = PhaseCosts::for_mode(&p, mode, 0.25);
                    let seed = (i * 9 + j * 3 + k) as u64;
                    let sim = simulate_speedup(&p, mode, &costs, ITER, seed);
                    let rel = (sim.speedup - truth).abs() / truth;
                    worst = worst.max(rel);
                    ensure(rel < 0.05, || format!("{mode:?} at {p:?}: simulated {:.4} vs {truth:.4}", sim.speedup))?;
                    points += 1;
                }
            }
        }
    }
    let mut identities = 0;
    for &alpha in &[0.0, 0.1, 0.5, 0.8, 0.95] {
        for &ce in &[0.05, 0.425, 1.0] {
            let one = SpeedupParams::new(alpha, 1, ce);
            ensure((expected_speedup(&one) - (1.0 + alpha) / (ce + 1.0)).abs() < 1e-12, || format!("gamma=1 at {alpha}"))?;
            for &c in &[2usize, 3, 5] {
                let p = SpeedupParams { alpha, gamma: 5, candidates: c, ce, xi: c as f64 };
                ensure((expected_speedup_serial(&p) - expected_speedup_batch(&p)).abs() < 1e-12, || "xi = c".into())?;
            }
            let zero = SpeedupParams { alpha: 0.0, gamma: 7, candidates: 4, ce, xi: 2.0 };
            ensure((expected_speedup(&zero) - 1.0 / (7.0 * ce + 1.0)).abs() < 1e-12, || "alpha=0 vanilla".into())?;
            ensure((expected_speedup_batch(&zero) - 1.0 / (ce + 1.0)).abs() < 1e-12, || "alpha=0 batch".into())?;
            ensure((expected_speedup_serial(&zero) - 1.0 / (2.0 * ce + 1.0)).abs() < 1e-12, || "alpha=0 serial".into())?;
            identities += 6;
        }
    }
    Ok(format!("{points} simulated points within {:.2}% (limit 5%); {identities} closed-form identities at 1e-12", worst * 100.0))
}

// ---------------------------------------------------------------------------
// 6. k-mer pipeline exactness
// ---------------------------------------------------------------------------

fn micro_msa(r: &mut impl Rng) -> String {
    let rows = r.random_range(1..=10);
    let cols = r.random_range(1..=12);
    let alphabet: Vec<char> = "ACDEFGHIKLMNPQRSTVWYXacdeghklmy-.".chars().collect();
    (0..rows)
        .map(|i| {
            let s: String = (0..cols).map(|_| alphabet[r.random_range(0..alphabet.len())]).collect();
            format!(">row{i} random\n{s}\n")
        })
        .collect()
}

/// Counts per k over ungapped, uppercased rows, from the raw FASTA text.
fn hand_counts(fasta: &str, ks: &[usize]) -> BTreeMap<usize, BTreeMap<String, u64>> {
    let rows: Vec<String> = fasta
        .lines()
        .filter(|l| !l.starts_with('>'))
        .map(|l| l.chars().filter(|c| *c != '-' && *c != '.').map(|c| c.to_ascii_uppercase()).collect())
        .collect();
    let mut out = BTreeMap::new();
    for &k in ks {
        let mut m = BTreeMap::new();
        for row in &rows {
            let chars: Vec<char> = row.chars().collect();
            if chars.len() >= k {
                for w in chars.windows(k) {
                    *m.entry(w.iter().collect::<String>()).or_insert(0) += 1;
                }
            }
        }
        out.insert(k, m);
    }
    out
}

fn hand_score(counts: &BTreeMap<usize, BTreeMap<String, u64>>, candidate: &str, tail: &str) -> Ratio<i128> {
    let mut acc = Ratio::from_integer(0i128);
    let len = candidate.chars().count() as i128;
    for (&k, table) in counts {
        let total: u64 = table.values().sum();
        if total == 0 {
            continue;
        }
        let t: Vec<char> = tail.chars().collect();
        let t = &t[t.len().saturating_sub(k - 1)..];
        let joined: Vec<char> = t.iter().copied().chain(candidate.chars()).collect();
        for start in 0..joined.len() {
            let end = start + k;
            if end > joined.len() || end <= t.len() {
                continue;
            }
            let w: String = joined[start..end].iter().collect();
            acc += Ratio::new(*table.get(&w).unwrap_or(&0) as i128, total as i128);
        }
    }
    acc / len
}

fn criterion_6() -> Outcome {
    let vocab = Vocabulary::protein();
    let mut r = rng(6);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let residues: Vec<char> = "ACDEFGHIKLMNPQRSTVWYX".chars().collect();
    let mut scored = 0;
    for case in 0..20 {
        let fasta = micro_msa(&mut r);
        let ks: Vec<usize> = match case % 4 {
            0 => vec![1],
            1 => vec![1, 3],
            2 => vec![1, 3, 5],
            _ => vec![2, 4],
        };
        let msa = parse_fasta(fasta.as_bytes()).map_err(|e| e.to_string())?;
        let index = build_index(&msa, &ks, &vocab).map_err(|e| e.to_string())?;
        let hand = hand_counts(&fasta, &ks);
        for (&k, expected) in &hand {
            let table = index.table(k).ok_or_else(|| format!("case {case}: k={k} missing"))?;
            let got: BTreeMap<String, u64> = table.counts().iter().map(|(w, &c)| (vocab.decode_ids(w), c)).collect();
            ensure(&got == expected, || format!("case {case}, k={k}: counts {got:?} vs {expected:?}"))?;
            ensure(table.total() == expected.values().sum::<u64>(), || format!("case {case}: total"))?;
        }
        for _ in 0..25 {
            let cand: String = (0..r.random_range(1..=6)).map(|_| residues[r.random_range(0..residues.len())]).collect();
            let tail: String = (0..r.random_range(0..=5)).map(|_| residues[r.random_range(0..residues.len())]).collect();
            let expected = hand_score(&hand, &cand, &tail);
            let (c, t) = (vocab.encode(&cand).unwrap(), vocab.encode(&tail).unwrap());
            let exact = index.score_exact(c.as_slice(), t.as_slice());
            ensure(exact == expected, || format!("case {case}: score({cand}|{tail}) {exact} vs {expected}"))?;
            let float = index.score(c.as_slice(), t.as_slice()).value;
            let want = *expected.numer() as f64 / *expected.denom() as f64;
            ensure((float - want).abs() < 1e-12, || format!("case {case}: float score {float} vs {want}"))?;
            scored += 1;
        }
        let path = dir.path().join(format!("ix{case}.json"));
        index.save(&path).map_err(|e| e.to_string())?;
        let back = KmerIndex::load(&path).map_err(|e| e.to_string())?;
        for &k in &ks {
            let (a, b) = (index.table(k).unwrap(), back.table(k).unwrap());
            ensure(a.counts() == b.counts() && a.total() == b.total(), || format!("case {case}: round trip k={k}"))?;
        }
        ensure(back.to_json().map_err(|e| e.to_string())? == index.to_json().map_err(|e| e.to_string())?, || {
            format!("case {case}: serialized forms differ")
        })?;
    }
    Ok(format!("20 micro-MSAs: counts, totals and {scored} rational scores exact; save/load round-trips"))
}

// ---------------------------------------------------------------------------
// 7. directional trend at desk scale
// ---------------------------------------------------------------------------

fn criterion_7(s: &ProteinSetup) -> Outcome {
    const N: usize = 200;
    const RESAMPLES: usize = 2000;
    let base = DecodeConfig {
        draft_len: 4,
        k_values: vec![1, 3, 5],
        max_len: SEQ_LEN,
        seed: 77,
        ..Default::default()
    };
    let inputs = LibraryInputs { draft: &s.draft, target: &s.target, index: Some(&s.index) };
    let run = |kind: LibraryKind, c: usize| -> Result<Vec<GenerationResult>, String> {
        let out = generate_library(kind, N, inputs, &DecodeConfig { candidates: c, ..base.clone() });
        if let Some((i, e)) = out.failures.first() {
            return Err(format!("sequence {i}: {e}"));
        }
        Ok(out.results.into_iter().map(|(_, r)| r).collect())
    };
    let kmer = |lib: &[GenerationResult]| -> Vec<f64> {
        lib.iter().map(|r| s.index.score(r.generated(), &[]).value).collect()
    };
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;

    let vanilla = run(LibraryKind::Speculative, 1)?;
    let guided = run(LibraryKind::Specmer, 5)?;
    let nll_v = library_nll(&vanilla, &s.target).map_err(|e| e.to_string())?;
    let nll_s = library_nll(&guided, &s.target).map_err(|e| e.to_string())?;
    let diff = bootstrap_mean_difference(&nll_s, &nll_v, RESAMPLES, 1);
    let upper = quantile_sorted(&diff, 0.95);
    ensure(upper <= 0.0, || {
        format!("mean NLL specmer {:.4} vs vanilla {:.4}: 95% upper bound of difference {upper:.4}", mean(&nll_s), mean(&nll_v))
    })?;

    let mut scores = Vec::new();
    let mut means = Vec::new();
    for &c in &[1usize, 2, 3, 5] {
        let lib = if c == 5 { guided.clone() } else { run(LibraryKind::Specmer, c)? };
        let k = kmer(&lib);
        means.push((c, mean(&k)));
        scores.push(k);
    }
    let mut bounds = Vec::new();
    for w in 0..scores.len() - 1 {
        let diff = bootstrap_mean_difference(&scores[w + 1], &scores[w], RESAMPLES, 2 + w as u64);
        let lower = quantile_sorted(&diff, 0.05);
        bounds.push(lower);
        ensure(lower >= 0.0, || {
            format!("k-mer score c={} -> c={}: 95% lower bound of increase {lower:.5}; means {means:?}", means[w].0, means[w + 1].0)
        })?;
    }
    Ok(format!(
        "mean NLL specmer(c=5) {:.4} <= vanilla {:.4} (95% upper bound {upper:+.4}); k-mer means {:?}, lower bounds {:?}",
        mean(&nll_s),
        mean(&nll_v),
        means.iter().map(|(c, m)| format!("c{c}={m:.4}")).collect::<Vec<_>>(),
        bounds.iter().map(|b| format!("{b:+.4}")).collect::<Vec<_>>()
    ))
}

// ---------------------------------------------------------------------------
// 8. acceptance accounting
// ---------------------------------------------------------------------------

fn criterion_8(s: &ProteinSetup) -> Outcome {
    const N: usize = 8;
    let base = DecodeConfig { max_len: 32, seed: 5, ..Default::default() };
    let grid = SweepGrid::standard();
    let report = run_sweep(&grid, &base, N, &s.draft, &s.target, &s.index, 4).map_err(|e| e.to_string())?;
    ensure(report.cells.len() == 144, || format!("{} cells", report.cells.len()))?;
    for cell in &report.cells {
        ensure(cell.error.is_none() && cell.failures.is_empty(), || format!("cell {} failed", cell.cell.id))?;
        let acc = cell.accounting.as_ref().ok_or_else(|| format!("cell {}: no accounting", cell.cell.id))?;
        ensure(acc.consistent(), || format!("cell {}: {acc:?}", cell.cell.id))?;

        // Independent recount from a regenerated library.
        let index = s.index.restrict(&cell.cell.config.k_values).map_err(|e| e.to_string())?;
        let inputs = LibraryInputs { draft: &s.draft, target: &s.target, index: Some(&index) };
        let lib = generate_library(LibraryKind::Specmer, N, inputs, &cell.cell.config);
        let (mut a, mut r) = (0u64, 0u64);
        for (_, g) in &lib.results {
            let mut emitted = 0;
            for it in &g.trace.iterations {
                let prefix = it.accepted.iter().take_while(|&&x| x).count();
                ensure(it.accepted[prefix..].len() <= 1, || "flags continue after a rejection".into())?;
                a += prefix as u64;
                r += (it.accepted.len() - prefix) as u64;
                emitted += prefix + usize::from(it.correction.is_some()) + usize::from(it.bonus.is_some());
            }
            ensure(emitted == g.generated().len(), || format!("cell {}: emitted token count", cell.cell.id))?;
        }
        ensure((a, r) == acc.reported, || format!("cell {}: recount {:?} vs reported {:?}", cell.cell.id, (a, r), acc.reported))?;
        let alpha = cell.stats.as_ref().and_then(|st| st.acceptance_ratio);
        ensure(alpha == (a + r > 0).then(|| a as f64 / (a + r) as f64), || format!("cell {}: pooled alpha", cell.cell.id))?;
    }
    Ok(format!("144 cells x {N} generations: reported totals equal the per-token recount in every cell"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let setup = protein_setup();
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut results: Vec<(&str, Outcome, f64)> = Vec::new();
    let mut record = |name: &'static str, f: &dyn Fn() -> Outcome| {
        if !filters.is_empty() && !filters.iter().any(|x| name.contains(x.as_str())) {
            return;
        }
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        match &out {
            Ok(detail) => println!("{name} PASS ({secs:.1}s) {detail}"),
            Err(why) => println!("{name} FAIL ({secs:.1}s) {why}"),
        }
        results.push((name, out, secs));
    };
    record("AC1 coupling marginal", &criterion_1);
    record("AC2 sequence distribution", &criterion_2);
    match &setup {
        Ok(s) => {
            record("AC3 single-candidate reduction", &|| criterion_3(s));
            record("AC4 batch acceptance", &criterion_4);
            record("AC5 speedup theory", &criterion_5);
            record("AC6 k-mer exactness", &criterion_6);
            record("AC7 directional trend", &|| criterion_7(s));
            record("AC8 acceptance accounting", &|| criterion_8(s));
        }
        Err(e) => {
            let msg = format!("fixture setup failed: {e}");
            for name in ["AC3", "AC7", "AC8"] {
                println!("{name} FAIL {msg}");
            }
            record("AC4 batch acceptance", &criterion_4);
            record("AC5 speedup theory", &criterion_5);
            record("AC6 k-mer exactness", &criterion_6);
            return ExitCode::FAILURE;
        }
    }
    let failed = results.iter().filter(|(_, o, _)| o.is_err()).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
