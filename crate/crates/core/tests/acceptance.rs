//! Acceptance run: every criterion at desk scale, one PASS/FAIL line each.
//! Exits non-zero when any criterion fails.

mod common;

use std::error::Error;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use memnn::harness::config::{ExperimentConfig, Hashing, InputMode};
use memnn::harness::experiment::{generate, learning_curve, run_eval, run_stream_eval, run_train};
use memnn::harness::hashbench::{hash_bench, synth_store, synth_train_config, train_synth, SynthConfig};
use memnn::parallel::Execution;
use memnn::simulator::{generate_stories, ring_story, DatasetConfig, TaskMode, ACTORS, GO_FORMS, OBJECTS, ROOMS};
use memnn::training::{build_vocab, examples, finite_difference_check, hinge_terms, init_model, sample_negatives, TimeTerms};
use memnn::{MatrixRole, MemNN, ModelFlags, TrainConfig, Vocab};

type Res<T> = Result<T, Box<dyn Error>>;

struct Line {
    id: usize,
    pass: bool,
    text: String,
}

fn config(kv: &[(&str, &str)]) -> Res<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    for (k, v) in kv {
        c.set(k, v)?;
    }
    c.validate()?;
    Ok(c)
}

/// Test accuracy (%) of a model trained and evaluated per `kv`.
fn accuracy(kv: &[(&str, &str)]) -> Res<f64> {
    let cfg = config(kv)?;
    let (train, test) = generate(&cfg)?;
    let (model, _) = run_train(&cfg, &train)?;
    Ok(run_eval(&model, &test, cfg.hashing, cfg.train.seed, Execution::Parallel)?.accuracy())
}

struct Table {
    d1_wo_before: f64,
    d1_actor: f64,
    d1_actor_object: f64,
    d5_actor: f64,
    d5_actor_object: f64,
}

fn criterion1(t: &Table) -> (bool, String) {
    let cols = [t.d1_wo_before, t.d1_actor, t.d1_actor_object, t.d5_actor, t.d5_actor_object];
    let pass = cols.iter().all(|&a| a >= 98.0);
    let text = format!(
        "k=2+time on d1 actor w/o before, d1 actor, d1 actor+object, d5 actor, d5 actor+object: {:.2} / {:.2} / {:.2} / {:.2} / {:.2} (need each >= 98)",
        cols[0], cols[1], cols[2], cols[3], cols[4]
    );
    (pass, text)
}

fn criterion2(t: &Table) -> Res<(bool, String)> {
    let base = [("difficulty", "5"), ("mode", "actor_object"), ("hops", "1")];
    let k1t = accuracy(&base)?;
    let k1 = accuracy(&[base[0], base[1], base[2], ("time", "false")])?;
    let k2t = t.d5_actor_object;
    let pass = k2t - k1t >= 20.0 && k1t - k1 >= 20.0;
    Ok((
        pass,
        format!(
            "d5 actor+object: k=2+time {k2t:.2} > k=1+time {k1t:.2} > k=1 {k1:.2}, gaps {:.2} and {:.2} (need >= 20 each)",
            k2t - k1t,
            k1t - k1
        ),
    ))
}

fn criterion3() -> Res<(bool, String)> {
    let base = [("difficulty", "1"), ("mode", "actor"), ("hops", "1")];
    let untimed = accuracy(&[base[0], base[1], base[2], ("time", "false")])?;
    let timed = accuracy(&base)?;
    Ok((
        untimed <= 50.0 && timed >= 55.0,
        format!("d1 actor, k=1: without time {untimed:.2} (need <= 50), with time {timed:.2} (need >= 55)"),
    ))
}

fn criterion4() -> Res<(bool, String)> {
    let cfg = config(&[("difficulty", "5"), ("mode", "actor")])?;
    let (train, test) = generate(&cfg)?;
    let rows = learning_curve(&cfg, &[100, 500], &train, &test)?;
    let (a100, a500) = (rows[0].test_accuracy, rows[1].test_accuracy);
    Ok((
        a500 >= 95.0 && a100 < a500,
        format!("d5 actor, k=2+time: 100 questions {a100:.2}, 500 questions {a500:.2} (need 500 >= 95 and 100 < 500)"),
    ))
}

fn criterion5() -> Res<(bool, String)> {
    let a = accuracy(&[("difficulty", "5"), ("mode", "actor_wo_before_object")])?;
    Ok((a >= 97.0, format!("d5 actor w/o before+object, k=2+time: {a:.2} (need >= 97)")))
}

fn ring_correct(unseen: bool) -> Res<(usize, Vec<String>)> {
    let cfg = config(&[("matching", "true"), ("unseen", if unseen { "true" } else { "false" })])?;
    let (train, _) = generate(&cfg)?;
    let (model, _) = run_train(&cfg, &train)?;
    let story = ring_story();
    let mut right = 0;
    let mut said = Vec::new();
    for q in &story.questions {
        let a = model.answer(story.memory_for(q), &q.tokens, None)?;
        right += usize::from(a.word == q.answer);
        said.push(a.word);
    }
    Ok((right, said))
}

fn criterion6() -> Res<(bool, String)> {
    let (with, said_with) = ring_correct(true)?;
    let (without, said_without) = ring_correct(false)?;
    Ok((
        with == 3 && without <= 1,
        format!("ring story: with unseen-word modelling {with}/3 {said_with:?} (need 3), without {without}/3 {said_without:?} (need <= 1)"),
    ))
}

fn criterion7() -> Res<(bool, String)> {
    let sc = SynthConfig::default();
    let store = synth_store(&sc);
    let model = train_synth(&store, &synth_train_config(10, sc.seed))?;
    let rows = hash_bench(
        &model,
        &store,
        &[Hashing::None, Hashing::Word, Hashing::Cluster(20)],
        sc.seed,
        Execution::Parallel,
    )?;
    let (none, word, cluster) = (&rows[0], &rows[1], &rows[2]);
    let reduction = none.mean_candidates / cluster.mean_candidates;
    let cluster_loss = none.accuracy - cluster.accuracy;
    let word_para_loss = none.paraphrase_accuracy - word.paraphrase_accuracy;
    let cluster_para_loss = none.paraphrase_accuracy - cluster.paraphrase_accuracy;
    let pass =
        reduction >= 3.0 && cluster_loss <= 2.0 && word.mean_candidates < cluster.mean_candidates && word_para_loss > cluster_para_loss;
    Ok((
        pass,
        format!(
            "{} slots: cluster K=20 {:.1}x fewer candidates (need >= 3), accuracy {:.2} vs {:.2} (loss {:.2}, need <= 2); \
             word hash {:.1} candidates vs {:.1}, paraphrase loss {:.2} vs cluster {:.2} (need word > cluster)",
            store.memory.len(),
            reduction,
            cluster.accuracy,
            none.accuracy,
            cluster_loss,
            word.mean_candidates,
            cluster.mean_candidates,
            word_para_loss,
            cluster_para_loss
        ),
    ))
}

/// Max finite-difference error over `n` random tiny instances.
fn gradient_sweep(flags: ModelFlags, n: usize, seed: u64) -> Res<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut worst: f64 = 0.0;
    let mut attempts = 0;
    while done < n {
        attempts += 1;
        if attempts > 50 * n {
            return Err("too many instances sat on a hinge point".into());
        }
        let len = rng.random_range(4..=10);
        let stories = generate_stories(&DatasetConfig {
            n_statements: len,
            n_questions: 1,
            story_len: len,
            difficulty: 5,
            mode: TaskMode::ActorObject,
            seed: rng.random(),
            ..Default::default()
        })?;
        let vocab = build_vocab(&stories)?;
        let cfg = TrainConfig {
            dim: rng.random_range(2..=6),
            init_std: 0.5,
            seed: rng.random(),
            ..Default::default()
        };
        let model = init_model(vocab, flags, &cfg)?;
        let exs = examples(&stories);
        let ex = &exs[0];
        let ep = model.episode(ex.memory);
        let negs = sample_negatives(&ep, ex, rng.random_range(1..=3), &mut rng)?;
        let terms = hinge_terms(&ep, ex, &negs, 0.1, TimeTerms::Both)?;
        if let Ok(err) = finite_difference_check(&model, &terms, 1e-6) {
            worst = worst.max(err);
            done += 1;
        }
    }
    Ok(worst)
}

fn criterion8() -> Res<(bool, String)> {
    let start = Instant::now();
    let base = gradient_sweep(
        ModelFlags {
            time: false,
            ..Default::default()
        },
        100,
        8,
    )?;
    let time = gradient_sweep(ModelFlags::default(), 100, 9)?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        base <= 1e-5 && time <= 1e-5 && secs < 60.0,
        format!("100 instances each: base max error {base:.2e}, time max error {time:.2e} (need <= 1e-5), {secs:.1}s (need < 60)"),
    ))
}

fn simulator_vocab() -> Res<Vocab> {
    let mut words: Vec<String> = ["where", "is", "was", "before", "the", "now", "?", "there"]
        .map(String::from)
        .to_vec();
    for s in ACTORS.iter().chain(&OBJECTS).chain(&ROOMS).chain(&GO_FORMS) {
        words.extend(s.split(' ').map(String::from));
    }
    words.sort();
    words.dedup();
    Ok(Vocab::from_words(words)?)
}

fn criterion9() -> Res<(bool, String)> {
    let vocab = simulator_vocab()?;
    let words = vocab.words().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let flags = ModelFlags {
        hops: 1,
        ..Default::default()
    };
    let mut agree = 0;
    let stores = 100;
    for _ in 0..stores {
        let mut model = MemNN::new(vocab.clone(), flags, rng.random_range(2..=12), 0.3, &mut rng)?;
        model.u_o = model.u_ot.clone().ok_or("time model without U_Ot")?.with_role(MatrixRole::Output);
        let sentence = |rng: &mut ChaCha8Rng| -> Vec<String> {
            (0..rng.random_range(1..=6))
                .map(|_| words[rng.random_range(0..words.len())].clone())
                .collect()
        };
        let n = rng.random_range(1..=30);
        let memory: Vec<Vec<String>> = (0..n).map(|_| sentence(&mut rng)).collect();
        let x = sentence(&mut rng);
        let k = rng.random_range(1..=n);
        let mut cands = sample(&mut rng, n, k).into_vec();
        cands.sort_unstable();
        let ep = model.episode(&memory);
        agree += usize::from(ep.support_time_untimed(&x, &[], &cands)? == ep.support_hop1(&x, &cands)?);
    }
    Ok((
        agree == stores,
        format!("untimed scan with U_Ot = U_O vs argmax: {agree}/{stores} stores agree (need all)"),
    ))
}

fn criterion10(sentence: f64) -> Res<(bool, String)> {
    let cfg = config(&[("difficulty", "1"), ("mode", "actor"), ("input", "stream")])?;
    assert_eq!(cfg.input, InputMode::Stream);
    let (train, test) = generate(&cfg)?;
    let (model, _) = run_train(&cfg, &train)?;
    let r = run_stream_eval(&model, &test, cfg.data_seed ^ 1, Execution::Parallel)?;
    let f1 = r.statement_boundaries.f1();
    let stream = r.qa.accuracy();
    Ok((
        f1 >= 95.0 && (stream - sentence).abs() <= 3.0,
        format!("d1 actor streams: boundary F1 {f1:.2} (need >= 95), QA {stream:.2} vs sentence mode {sentence:.2} (need within 3)"),
    ))
}

fn criterion11() -> Res<(bool, String)> {
    let mut audits = Vec::new();
    for (mode, seed) in [(TaskMode::ActorObject, 11), (TaskMode::Actor, 12)] {
        let stories = generate_stories(&DatasetConfig {
            n_statements: 20_000,
            n_questions: 5_000,
            difficulty: 5,
            mode,
            seed,
            ..Default::default()
        })?;
        audits.push(common::audit_stories(&stories));
    }
    let questions: usize = audits.iter().map(|a| a.questions).sum();
    let statements: usize = audits.iter().map(|a| a.statements).sum();
    let failures: Vec<&String> = audits.iter().flat_map(|a| &a.failures).collect();
    Ok((
        questions >= 10_000 && failures.is_empty(),
        format!(
            "{questions} questions and {statements} actions replayed from text: {} disagreements or illegal actions (need 0){}",
            failures.len(),
            failures.first().map_or(String::new(), |f| format!("; first: {f}"))
        ),
    ))
}

fn record(lines: &mut Vec<Line>, id: usize, r: Res<(bool, String)>, secs: f64) {
    let (pass, text) = match r {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let line = Line { id, pass, text };
    println!(
        "criterion {:>2}: {}  {}  [{secs:.1}s]",
        line.id,
        if line.pass { "PASS" } else { "FAIL" },
        line.text
    );
    lines.push(line);
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let s = Instant::now();
    let v = f();
    (v, s.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--list`; nothing to list here.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut lines = Vec::new();

    let (table, secs) = timed(|| -> Res<Table> {
        Ok(Table {
            d1_wo_before: accuracy(&[("difficulty", "1"), ("mode", "actor_wo_before")])?,
            d1_actor: accuracy(&[("difficulty", "1"), ("mode", "actor")])?,
            d1_actor_object: accuracy(&[("difficulty", "1"), ("mode", "actor_object")])?,
            d5_actor: accuracy(&[("difficulty", "5"), ("mode", "actor")])?,
            d5_actor_object: accuracy(&[("difficulty", "5"), ("mode", "actor_object")])?,
        })
    });
    match &table {
        Ok(t) => record(&mut lines, 1, Ok(criterion1(t)), secs),
        Err(e) => record(&mut lines, 1, Err(e.to_string().into()), secs),
    }
    let (r, s) = timed(|| table.as_ref().map_err(|e| e.to_string().into()).and_then(criterion2));
    record(&mut lines, 2, r, s);
    let (r, s) = timed(criterion3);
    record(&mut lines, 3, r, s);
    let (r, s) = timed(criterion4);
    record(&mut lines, 4, r, s);
    let (r, s) = timed(criterion5);
    record(&mut lines, 5, r, s);
    let (r, s) = timed(criterion6);
    record(&mut lines, 6, r, s);
    let (r, s) = timed(criterion7);
    record(&mut lines, 7, r, s);
    let (r, s) = timed(criterion8);
    record(&mut lines, 8, r, s);
    let (r, s) = timed(criterion9);
    record(&mut lines, 9, r, s);
    let sentence = table.as_ref().map(|t| t.d1_actor).map_err(|e| e.to_string());
    let (r, s) = timed(|| sentence.map_err(Into::into).and_then(criterion10));
    record(&mut lines, 10, r, s);
    let (r, s) = timed(criterion11);
    record(&mut lines, 11, r, s);

    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!("{} of {} criteria pass", lines.len() - failed.len(), lines.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing: {failed:?}");
        ExitCode::FAILURE
    }
}
