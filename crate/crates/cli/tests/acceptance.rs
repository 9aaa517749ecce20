//! Acceptance suite. Each criterion is one test that prints a single
//! PASS line on success; failures carry the offending detail.
//!
//! Golden typing-tree files can be regenerated by running with
//! `COGC_BLESS=1`.

use cogc_core::ast::{CoreType, Kind, PrimType, Program};
use cogc_core::ffi::{builtin_library, AbstractFnSpec, Registry};
use cogc_core::gen;
use cogc_core::jsonval::{deep_uvalue_json_typed, embed_uvalue, vvalue_to_json};
use cogc_core::kinding::{
    bang_kind, bang_type, kind_check, max_kind, rulecheck, subst_type, KindContext,
};
use cogc_core::parse::parse_program;
use cogc_core::passes::{a_normalise, desugar_program, mono_val, monomorphise};
use cogc_core::refine::{
    corr_value, frame_check, refinement_oracle, value_typing_u, value_typing_v,
};
use cogc_core::sem_update::{apply_fn_u, Pointer, Store, UValue};
use cogc_core::sem_value::{apply_fn_v, VValue, DEFAULT_FUEL};
use cogc_core::typecheck::{check_program, typing_to_json_with};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

fn list_programs(sub: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(corpus_dir().join(sub))
        .expect("corpus directory exists")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().map(|e| e == "cogc").unwrap_or(false))
        .collect();
    v.sort();
    v
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap().to_string_lossy().to_string()
}

struct Loaded {
    name: String,
    prog: Program,
    reg: Registry,
}

fn load_accept(path: &Path) -> Loaded {
    let src = std::fs::read_to_string(path).unwrap();
    let prog = parse_program(&src).unwrap_or_else(|d| panic!("{}: {d}", path.display()));
    let prog = desugar_program(&prog).unwrap();
    check_program(&prog).unwrap_or_else(|ds| panic!("{}: {:?}", path.display(), ds));
    let reg = builtin_library(&prog).unwrap();
    Loaded { name: stem(path), prog, reg }
}

/// Monomorphic functions whose argument values can be generated.
fn oracle_entries(prog: &Program) -> Vec<(String, CoreType, CoreType)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    prog.fun_defs()
        .filter(|f| f.signature.is_monomorphic())
        .filter_map(|f| {
            let (a, r) = f.signature.arg_result();
            gen::random_vvalue(&mut rng, a)
                .map(|_| (f.name.clone(), a.clone(), r.clone()))
        })
        .collect()
}

// --- criterion 1 -----------------------------------------------------------

#[test]
fn criterion_1_kinding_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let delta = gen::standard_kind_context();
    let empty = KindContext::empty();
    let mut checked = 0usize;
    for _ in 0..10_000 {
        let t = gen::random_type(&mut rng, &delta, 6);
        let mk = max_kind(&delta, &t).unwrap();
        for k in Kind::all_kinds() {
            // the algorithmic checker agrees with the direct rule-based one
            assert_eq!(
                rulecheck::holds(&delta, &t, k),
                k.is_subset(mk),
                "kind checker disagreement on {t} at {k}"
            );
            if k.is_subset(mk) {
                // waiving rights
                for k2 in Kind::all_kinds().filter(|k2| k2.is_subset(k)) {
                    assert!(rulecheck::holds(&delta, &t, k2), "waiving fails on {t}");
                }
                // kinding for bang
                assert!(
                    kind_check(&delta, &bang_type(&t), bang_kind(k)).unwrap(),
                    "bang lemma fails on {t} at {k}"
                );
            }
        }
        checked += 1;

        // instantiation preserves kinds
        if checked % 10 == 0 {
            let (binders, subst) = gen::random_instantiation(&mut rng);
            let t = gen::random_type(&mut rng, &binders, 4);
            for k in Kind::all_kinds() {
                if kind_check(&binders, &t, k).unwrap() {
                    assert!(
                        kind_check(&empty, &subst_type(&t, &subst), k).unwrap(),
                        "instantiation lemma fails on {t} at {k}"
                    );
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(checked >= 10_000);
    assert!(secs < 30.0, "kinding oracle took {secs:.1}s, budget is 30s");
    println!("criterion 1: PASS — {checked} random types, 8 kinds each, lemmas 1-3, {secs:.1}s");
}

// --- criterion 2 -----------------------------------------------------------

#[test]
fn criterion_2_typing_golden_corpus() {
    let accepts = list_programs("accept");
    let rejects = list_programs("reject");
    assert!(
        accepts.len() + rejects.len() >= 40,
        "corpus has only {} programs",
        accepts.len() + rejects.len()
    );

    // every rule name must be exercised somewhere in the corpus
    let mut seen_rules: BTreeSet<String> = BTreeSet::new();
    fn collect_rules(t: &cogc_core::typecheck::TypingTree, acc: &mut BTreeSet<String>) {
        acc.insert(t.rule.to_string());
        for c in &t.children {
            collect_rules(c, acc);
        }
    }

    let bless = std::env::var("COGC_BLESS").is_ok();
    for path in &accepts {
        let src = std::fs::read_to_string(path).unwrap();
        let prog =
            desugar_program(&parse_program(&src).unwrap_or_else(|d| panic!("{}: {d}", path.display())))
                .unwrap();
        let t1 = check_program(&prog)
            .unwrap_or_else(|ds| panic!("{} rejected: {:?}", path.display(), ds));
        let t2 = check_program(&prog).unwrap();
        let j1 = serde_json::to_string_pretty(&typing_to_json_with(&prog, &t1)).unwrap();
        let j2 = serde_json::to_string_pretty(&typing_to_json_with(&prog, &t2)).unwrap();
        assert_eq!(j1, j2, "{}: typing trees not deterministic", path.display());
        for tree in t1.values() {
            collect_rules(tree, &mut seen_rules);
        }
        // independent re-assertion of the recorded context operations,
        // and the closed-body property: a definition body's free
        // variables are at most its parameter
        cogc_core::typecheck::validate_program_typing(&prog, &t1)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        for f in prog.fun_defs() {
            let fv = f.body.free_vars();
            assert!(
                fv.iter().all(|v| v == &f.param),
                "{}: body of `{}` has stray free variables {fv:?}",
                path.display(),
                f.name
            );
        }

        let golden = corpus_dir().join("golden").join(format!("{}.json", stem(path)));
        if bless {
            std::fs::write(&golden, &j1).unwrap();
        } else {
            let want = std::fs::read_to_string(&golden)
                .unwrap_or_else(|_| panic!("missing golden {} (run with COGC_BLESS=1)", golden.display()));
            assert_eq!(j1, want, "{}: typing tree deviates from golden", path.display());
        }
    }

    for path in &rejects {
        let src = std::fs::read_to_string(path).unwrap();
        let expect = src
            .lines()
            .next()
            .and_then(|l| l.split("expect-error:").nth(1))
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|| panic!("{} lacks an expect-error header", path.display()));
        let got = match parse_program(&src) {
            Err(d) => d.code.as_str().to_string(),
            Ok(p) => match desugar_program(&p) {
                Err(d) => d.code.as_str().to_string(),
                Ok(p) => match check_program(&p) {
                    Err(ds) => ds[0].code.as_str().to_string(),
                    Ok(_) => panic!("{} unexpectedly accepted", path.display()),
                },
            },
        };
        assert_eq!(got, expect, "{}: wrong rejection", path.display());
    }

    for rule in [
        "Var", "Unit", "Literal", "PrimOp", "Cast", "App", "Fun", "Case", "Cons", "Prom",
        "Esac", "Let", "LetBang", "Take1", "Take2", "Put1", "Put2", "Member", "Struct", "If",
    ] {
        assert!(seen_rules.contains(rule), "corpus never exercises rule {rule}");
    }

    println!(
        "criterion 2: PASS — {} accepting + {} rejecting programs, byte-stable goldens, re-asserted context records, all 20 rules covered",
        accepts.len(),
        rejects.len()
    );
}

// --- criterion 3 -----------------------------------------------------------

#[test]
fn criterion_3_dynamic_refinement_oracle() {
    let start = Instant::now();
    let mut runs = 0usize;
    for path in list_programs("accept") {
        let l = load_accept(&path);
        let entries = oracle_entries(&l.prog);
        assert!(
            !entries.is_empty(),
            "{}: no oracle-able entry point",
            l.name
        );
        for (fname, arg_ty, res_ty) in entries {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ runs as u64);
            for _ in 0..20 {
                let v = gen::random_vvalue(&mut rng, &arg_ty).unwrap();
                let mut store = Store::new();
                let u = embed_uvalue(&v, &arg_ty, &mut store).unwrap();
                let verdict = refinement_oracle(
                    &l.prog, &l.reg, &fname, &v, &u, &store, &arg_ty, &res_ty, DEFAULT_FUEL,
                );
                assert!(
                    verdict.pass,
                    "{}::{fname} fails the oracle on {}: {:?}",
                    l.name,
                    vvalue_to_json(&v),
                    verdict.failure
                );
                runs += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "oracle corpus took {secs:.1}s, budget is 120s");
    println!("criterion 3: PASS — {runs} oracle runs, 0 failures, {secs:.1}s");
}

// --- criterion 4 -----------------------------------------------------------

#[test]
fn criterion_4_erasure_coherence() {
    let mut checked = 0usize;
    for path in list_programs("accept") {
        let l = load_accept(&path);
        for (fname, arg_ty, res_ty) in oracle_entries(&l.prog) {
            let mut rng = ChaCha8Rng::seed_from_u64(0xe7a5);
            for _ in 0..5 {
                let v = gen::random_vvalue(&mut rng, &arg_ty).unwrap();
                let mut store = Store::new();
                let u = embed_uvalue(&v, &arg_ty, &mut store).unwrap();
                let v_out = apply_fn_v(&l.prog, &l.reg, &fname, &[], v.clone(), DEFAULT_FUEL)
                    .unwrap();
                let (u_out, store_out) = apply_fn_u(
                    &l.prog,
                    &l.reg,
                    &fname,
                    &[],
                    u.clone(),
                    store.clone(),
                    DEFAULT_FUEL,
                )
                .unwrap();
                for (uv, st, vv, ty) in [
                    (&u, &store, &v, &arg_ty),
                    (&u_out, &store_out, &v_out, &res_ty),
                ] {
                    let both = corr_value(&l.prog, &l.reg, uv, st, vv, ty);
                    assert!(both.ok, "{}::{fname}: corr fails: {:?}", l.name, both.failure);
                    assert!(
                        value_typing_v(&l.prog, &l.reg, vv, ty),
                        "{}::{fname}: value-side typing disagrees with corr",
                        l.name
                    );
                    let uo = value_typing_u(&l.prog, &l.reg, uv, st, ty);
                    assert!(uo.ok, "{}::{fname}: update-side typing disagrees with corr", l.name);
                    assert_eq!(
                        uo.sets, both.sets,
                        "{}::{fname}: erased relation computes different pointer sets",
                        l.name
                    );
                    checked += 1;
                }
            }
        }
    }
    println!("criterion 4: PASS — {checked} erasure checks, 0 discrepancies");
}

// --- criterion 5 -----------------------------------------------------------

fn broken_spec(decl: &cogc_core::ast::AbsFunDecl, which: &str) -> AbstractFnSpec {
    use std::sync::Arc;
    match which {
        "alias" => AbstractFnSpec {
            name: decl.name.clone(),
            signature: decl.signature.clone(),
            impl_v: Arc::new(|_cb, _t, arg| {
                Ok(VValue::Record(vec![("p1".into(), arg.clone()), ("p2".into(), arg)]))
            }),
            impl_u: Arc::new(|_cb, _t, arg, _s| {
                Ok(UValue::Record(vec![("p1".into(), arg.clone()), ("p2".into(), arg)]))
            }),
        },
        "leak" => AbstractFnSpec {
            name: decl.name.clone(),
            signature: decl.signature.clone(),
            impl_v: Arc::new(|_cb, _t, _arg| Ok(VValue::Unit)),
            impl_u: Arc::new(|_cb, _t, _arg, _s| Ok(UValue::Unit)),
        },
        "stale" => AbstractFnSpec {
            name: decl.name.clone(),
            signature: decl.signature.clone(),
            impl_v: Arc::new(|_cb, _t, arg| Ok(arg)),
            impl_u: Arc::new(|_cb, _t, arg, store| {
                if let UValue::Ptr(p) = &arg {
                    store.free(*p).unwrap();
                }
                Ok(arg)
            }),
        },
        _ => unreachable!(),
    }
}

#[test]
fn criterion_5_lemma_replay_and_negative_fixtures() {
    // positive: the oracle replays weakening/splitting/bang at every
    // recorded derivation point; run it over structure-heavy programs
    for name in ["letbang_member", "letbang_multi", "take_put_sequence", "poly_id"] {
        let path = corpus_dir().join("accept").join(format!("{name}.cogc"));
        let l = load_accept(&path);
        for (fname, arg_ty, res_ty) in oracle_entries(&l.prog) {
            let mut rng = ChaCha8Rng::seed_from_u64(55);
            for _ in 0..10 {
                let v = gen::random_vvalue(&mut rng, &arg_ty).unwrap();
                let mut store = Store::new();
                let u = embed_uvalue(&v, &arg_ty, &mut store).unwrap();
                let verdict = refinement_oracle(
                    &l.prog, &l.reg, &fname, &v, &u, &store, &arg_ty, &res_ty, DEFAULT_FUEL,
                );
                assert!(verdict.pass, "{name}::{fname}: {:?}", verdict.failure);
            }
        }
    }

    // unrelated updates: frame-respecting changes elsewhere never disturb
    // an existing correspondence
    let empty_prog = Program::new(vec![]);
    let empty_reg = Registry::new();
    let ty: CoreType = cogc_core::parse::parse_type("(rec wr (n u8))").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let mut store = Store::new();
        let n = rng.gen_range(0..=255u64);
        let p = store.alloc(UValue::Record(vec![("n".into(), UValue::lit(n, PrimType::U8))]));
        let q = store.alloc(UValue::lit(1, PrimType::U8));
        let u = UValue::Ptr(p);
        let v = VValue::Record(vec![("n".into(), VValue::lit(n, PrimType::U8))]);
        let rep = corr_value(&empty_prog, &empty_reg, &u, &store, &v, &ty);
        assert!(rep.ok);
        let mut store2 = store.clone();
        store2.free(q).unwrap();
        let w1: BTreeSet<Pointer> = [q].into();
        assert!(frame_check(&w1, &store, &BTreeSet::new(), &store2).is_empty());
        let rep2 = corr_value(&empty_prog, &empty_reg, &u, &store2, &v, &ty);
        assert!(rep2.ok && rep2.sets == rep.sets, "unrelated update disturbed correspondence");
    }

    // negative fixtures: each broken foreign function is rejected with
    // the specific violation named
    let fixtures = [
        (
            "alias",
            "(absdef dup (forall) (fn (r (rec wr (n u8)))
               (tuple (rec wr (n u8)) (rec wr (n u8)))))
             (def go (forall) (fn (r (rec wr (n u8)))
               (tuple (rec wr (n u8)) (rec wr (n u8)))
               (app (funref dup) r)))",
            "AliasViolation",
        ),
        (
            "leak",
            "(absdef sink (forall) (fn (r (rec wr (n u8))) unit))
             (def go (forall) (fn (r (rec wr (n u8))) unit
               (app (funref sink) r)))",
            "LeakFreedom",
        ),
        (
            "stale",
            "(absdef keep (forall) (fn (r (rec wr (n u8))) (rec wr (n u8))))
             (def go (forall) (fn (r (rec wr (n u8))) (rec wr (n u8))
               (app (funref keep) r)))",
            "DanglingPointer",
        ),
    ];
    for (which, src, expected) in fixtures {
        let prog = desugar_program(&parse_program(src).unwrap()).unwrap();
        check_program(&prog).unwrap();
        let mut reg = Registry::new();
        reg.register_fn(broken_spec(prog.abs_decls().next().unwrap(), which)).unwrap();
        let mut store = Store::new();
        let p = store.alloc(UValue::Record(vec![("n".into(), UValue::lit(5, PrimType::U8))]));
        let f = prog.lookup_fun("go").unwrap();
        let (arg_ty, res_ty) = f.signature.arg_result();
        let verdict = refinement_oracle(
            &prog,
            &reg,
            "go",
            &VValue::Record(vec![("n".into(), VValue::lit(5, PrimType::U8))]),
            &UValue::Ptr(p),
            &store,
            arg_ty,
            res_ty,
            DEFAULT_FUEL,
        );
        assert!(!verdict.pass, "{which} fixture unexpectedly passed");
        let f = verdict.failure.expect("failure recorded");
        assert!(
            f.detail.contains(expected),
            "{which}: expected `{expected}` in `{}`",
            f.detail
        );
    }
    println!("criterion 5: PASS — lemma replays clean; alias/leak/stale fixtures rejected by name");
}

// --- criterion 6 -----------------------------------------------------------

#[test]
fn criterion_6_pass_preservation() {
    let mut compared = 0usize;
    for path in list_programs("accept") {
        let src = std::fs::read_to_string(&path).unwrap();
        let raw = parse_program(&src).unwrap();
        let prog = desugar_program(&raw).unwrap();
        check_program(&prog).unwrap();
        let anf = a_normalise(&prog);
        check_program(&anf)
            .unwrap_or_else(|ds| panic!("{}: ANF broke typing: {ds:?}", path.display()));
        let (mono, rename) = monomorphise(&prog, None).unwrap();
        check_program(&mono)
            .unwrap_or_else(|ds| panic!("{}: mono broke typing: {ds:?}", path.display()));
        let reg = builtin_library(&prog).unwrap();
        let reg_anf = builtin_library(&anf).unwrap();
        let reg_mono = builtin_library(&mono).unwrap();

        for (fname, arg_ty, res_ty) in oracle_entries(&prog) {
            if res_ty.free_type_vars().is_empty() && fname.is_empty() {
                unreachable!()
            }
            // function-typed results have no stable printed form; skip them
            fn has_fun(t: &CoreType) -> bool {
                match t {
                    CoreType::Fun(..) => true,
                    CoreType::Variant(a) => a.iter().any(|(_, t)| has_fun(t)),
                    CoreType::Record { fields, .. } => fields.iter().any(|f| has_fun(&f.ty)),
                    CoreType::Abstract { args, .. } => args.iter().any(has_fun),
                    _ => false,
                }
            }
            if has_fun(&res_ty) {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0xbeef);
            for _ in 0..10 {
                let v = gen::random_vvalue(&mut rng, &arg_ty).unwrap();

                // desugaring: direct multi-way evaluation agrees
                let v_raw =
                    apply_fn_v(&raw, &reg, &fname, &[], v.clone(), DEFAULT_FUEL).unwrap();
                let v_desugared =
                    apply_fn_v(&prog, &reg, &fname, &[], v.clone(), DEFAULT_FUEL).unwrap();
                assert_eq!(v_raw, v_desugared, "{}::{fname}: desugaring changed the result", path.display());

                // A-normalisation: value semantics agrees
                let v_anf =
                    apply_fn_v(&anf, &reg_anf, &fname, &[], v.clone(), DEFAULT_FUEL).unwrap();
                assert_eq!(
                    vvalue_to_json(&v_desugared).to_string(),
                    vvalue_to_json(&v_anf).to_string(),
                    "{}::{fname}: ANF changed the value result",
                    path.display()
                );

                // A-normalisation: update semantics agrees up to a pointer
                // bijection (canonical deep dumps)
                let mut store = Store::new();
                let u = embed_uvalue(&v, &arg_ty, &mut store).unwrap();
                let (u_out, s_out) = apply_fn_u(
                    &prog, &reg, &fname, &[], u.clone(), store.clone(), DEFAULT_FUEL,
                )
                .unwrap();
                let (u_anf, s_anf) =
                    apply_fn_u(&anf, &reg_anf, &fname, &[], u, store, DEFAULT_FUEL).unwrap();
                assert_eq!(
                    deep_uvalue_json_typed(&u_out, &s_out, &res_ty).unwrap(),
                    deep_uvalue_json_typed(&u_anf, &s_anf, &res_ty).unwrap(),
                    "{}::{fname}: ANF changed the update result",
                    path.display()
                );

                // monomorphisation equation
                let mono_name = rename.lookup(&fname, &[]).unwrap();
                let lhs = apply_fn_v(
                    &mono,
                    &reg_mono,
                    mono_name,
                    &[],
                    mono_val(&rename, &v).unwrap(),
                    DEFAULT_FUEL,
                )
                .unwrap();
                let rhs = mono_val(&rename, &v_desugared).unwrap();
                assert_eq!(lhs, rhs, "{}::{fname}: monomorphisation equation fails", path.display());
                compared += 1;
            }
        }
    }
    println!("criterion 6: PASS — {compared} before/after comparisons across desugar, ANF, mono; 0 failures");
}

// --- criterion 7 -----------------------------------------------------------

#[test]
fn criterion_7_c_differential() {
    use cogc_core::codegen::{diff_run_c, find_cc, DiffOutcome};
    if find_cc().is_none() {
        println!("criterion 7: SKIPPED — no C compiler available");
        return;
    }
    let mut programs = 0usize;
    let mut cases = 0usize;
    for path in list_programs("accept") {
        let src = std::fs::read_to_string(&path).unwrap();
        let prog = parse_program(&src).unwrap();
        let checked = desugar_program(&prog).unwrap();
        check_program(&checked).unwrap();

        // diffable: monomorphic entries with first-order arg and result
        fn has_fun(t: &CoreType) -> bool {
            match t {
                CoreType::Fun(..) => true,
                CoreType::Variant(a) => a.iter().any(|(_, t)| has_fun(t)),
                CoreType::Record { fields, .. } => fields.iter().any(|f| has_fun(&f.ty)),
                CoreType::Abstract { args, .. } => args.iter().any(has_fun),
                _ => false,
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xcafe);
        let mut ran_any = false;
        for (fname, arg_ty, res_ty) in oracle_entries(&checked) {
            if has_fun(&arg_ty) || has_fun(&res_ty) {
                continue;
            }
            let inputs: Vec<VValue> = (0..5)
                .map(|_| gen::random_vvalue(&mut rng, &arg_ty).unwrap())
                .collect();
            match diff_run_c(&prog, &fname, &inputs, None).unwrap() {
                DiffOutcome::Passed { cases: c } => {
                    cases += c;
                    ran_any = true;
                }
                DiffOutcome::Skipped { reason } => {
                    println!("criterion 7: SKIPPED — {reason}");
                    return;
                }
                other => panic!("{}::{fname}: {other:?}", path.display()),
            }
        }
        if ran_any {
            programs += 1;
        }
    }
    assert!(programs >= 20, "only {programs} programs were diffable");
    println!("criterion 7: PASS — {programs} programs, {cases} cases match the update semantics");
}

// --- criterion 8 -----------------------------------------------------------

#[test]
fn criterion_8_cli_determinism() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_cogc");
    let file = corpus_dir().join("accept").join("boxed_roundtrip.cogc");
    let file = file.to_string_lossy().to_string();
    let arg = r#"{"rec":{"n":5,"m":300}}"#;

    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "cogc {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };

    for args in [
        vec!["check", file.as_str()],
        vec!["run", file.as_str(), "--fn", "main", "--arg", arg],
        vec!["run", file.as_str(), "--fn", "main", "--sem", "update", "--arg", arg, "--trace"],
        vec!["oracle", file.as_str(), "--fn", "main", "--arg", arg],
        vec!["mono", file.as_str()],
        vec!["anf", file.as_str()],
        vec!["desugar", file.as_str()],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a, b, "cogc {args:?} is not byte-deterministic");
    }

    // typing trees serialised twice are byte-identical too
    let tmp = tempfile::tempdir().unwrap();
    let t1 = tmp.path().join("t1.json");
    let t2 = tmp.path().join("t2.json");
    run(&["check", file.as_str(), "--typing-tree", t1.to_str().unwrap()]);
    run(&["check", file.as_str(), "--typing-tree", t2.to_str().unwrap()]);
    assert_eq!(
        std::fs::read(&t1).unwrap(),
        std::fs::read(&t2).unwrap(),
        "typing tree files differ across runs"
    );
    println!("criterion 8: PASS — check/run/oracle/mono/anf/desugar byte-identical across runs");
}
