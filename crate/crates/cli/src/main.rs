//! `cogc`: command-line front door for the pipeline: check, run, oracle,
//! source-to-source passes, C emission and differential testing.
//!
//! Exit codes: 0 success, 1 check/evaluation failure, 2 oracle failure,
//! 3 usage error.

use clap::{Parser, Subcommand, ValueEnum};
use cogc_core::diagnostics::Diagnostic;
use cogc_core::ffi::builtin_library;
use cogc_core::jsonval::{
    embed_uvalue, store_to_json, uvalue_to_json, vvalue_from_json, vvalue_to_json,
};
use cogc_core::passes::{a_normalise, desugar_program, monomorphise};
use cogc_core::pretty::program_to_source;
use cogc_core::refine::refinement_oracle;
use cogc_core::sem_update::{apply_fn_u, Store};
use cogc_core::sem_value::{apply_fn_v, DEFAULT_FUEL};
use cogc_core::typecheck::{check_program, typing_to_json_with};
use cogc_core::{parse, Program};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cogc", version, about = "linear systems language toolchain")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Semantics {
    Value,
    Update,
}

#[derive(Subcommand)]
enum Cmd {
    /// Type-check a program and print diagnostics.
    Check {
        file: PathBuf,
        /// Write the full typing derivations as JSON.
        #[arg(long)]
        typing_tree: Option<PathBuf>,
    },
    /// Evaluate a monomorphic function on an argument.
    Run {
        file: PathBuf,
        #[arg(long = "fn")]
        fname: String,
        #[arg(long, value_enum, default_value = "value")]
        sem: Semantics,
        /// Argument as JSON, decoded at the function's parameter type.
        #[arg(long)]
        arg: String,
        /// Also dump the final store (update semantics).
        #[arg(long)]
        trace: bool,
    },
    /// Run the dynamic refinement oracle on a function and argument.
    Oracle {
        file: PathBuf,
        #[arg(long = "fn")]
        fname: String,
        #[arg(long)]
        arg: String,
    },
    /// Monomorphise and print the specialised program.
    Mono {
        file: PathBuf,
        /// Entry points (defaults to every monomorphic function).
        #[arg(long = "entry")]
        entries: Vec<String>,
        /// Write the rename map as JSON.
        #[arg(long)]
        rename_out: Option<PathBuf>,
    },
    /// A-normalise and print the transformed program.
    Anf { file: PathBuf },
    /// Eliminate multi-way match and print the transformed program.
    Desugar { file: PathBuf },
    /// Emit C for the monomorphised, A-normalised program.
    EmitC {
        file: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Compile to C and compare a run against the update interpreter.
    DiffC {
        file: PathBuf,
        #[arg(long = "fn")]
        fname: String,
        #[arg(long)]
        arg: String,
        /// Keep the generated C and binaries in this directory.
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
}

struct Loaded {
    path: String,
    source: String,
    prog: Program,
}

fn fail_diag(l: &Loaded, d: &Diagnostic) -> ExitCode {
    eprintln!("{}", d.render(&l.path, &l.source));
    ExitCode::from(1)
}

fn load(path: &PathBuf) -> Result<Loaded, ExitCode> {
    let source = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cogc: cannot read {}: {e}", path.display());
            return Err(ExitCode::from(3));
        }
    };
    let pathstr = path.display().to_string();
    match parse::parse_program(&source) {
        Ok(prog) => Ok(Loaded { path: pathstr, source, prog }),
        Err(d) => {
            eprintln!("{}", d.render(&pathstr, &source));
            Err(ExitCode::from(1))
        }
    }
}

fn desugar(l: &Loaded) -> Result<Program, ExitCode> {
    desugar_program(&l.prog).map_err(|d| fail_diag(l, &d))
}

fn check(l: &Loaded, p: &Program) -> Result<cogc_core::typecheck::ProgramTyping, ExitCode> {
    check_program(p).map_err(|ds| {
        for d in &ds {
            eprintln!("{}", d.render(&l.path, &l.source));
        }
        ExitCode::from(1)
    })
}

fn fuel() -> u64 {
    std::env::var("COGC_FUEL")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_FUEL)
}

fn fn_signature<'p>(
    l: &Loaded,
    p: &'p Program,
    fname: &str,
) -> Result<&'p cogc_core::ast::FunDef, ExitCode> {
    match p.lookup_fun(fname) {
        Some(f) if f.signature.is_monomorphic() => Ok(f),
        Some(_) => {
            eprintln!("cogc: `{fname}` is polymorphic; pick a monomorphic entry");
            Err(ExitCode::from(1))
        }
        None => {
            let _ = l;
            eprintln!("cogc: no function named `{fname}`");
            Err(ExitCode::from(1))
        }
    }
}

fn decode_arg(
    arg: &str,
    ty: &cogc_core::CoreType,
) -> Result<cogc_core::sem_value::VValue, ExitCode> {
    let json: serde_json::Value = match serde_json::from_str(arg) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("cogc: --arg is not valid JSON: {e}");
            return Err(ExitCode::from(3));
        }
    };
    vvalue_from_json(&json, ty).map_err(|e| {
        eprintln!("cogc: --arg does not fit the parameter type: {e}");
        ExitCode::from(1)
    })
}

fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own exit code conventions differ; usage errors are 3
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };

    match cli.cmd {
        Cmd::Check { file, typing_tree } => {
            let l = match load(&file) {
                Ok(l) => l,
                Err(c) => return c,
            };
            let p = match desugar(&l) {
                Ok(p) => p,
                Err(c) => return c,
            };
            let trees = match check(&l, &p) {
                Ok(t) => t,
                Err(c) => return c,
            };
            if let Some(out) = typing_tree {
                let json = typing_to_json_with(&p, &trees);
                if let Err(e) = std::fs::write(&out, serde_json::to_string_pretty(&json).unwrap())
                {
                    eprintln!("cogc: cannot write {}: {e}", out.display());
                    return ExitCode::from(3);
                }
            }
            ExitCode::SUCCESS
        }
        Cmd::Run { file, fname, sem, arg, trace } => {
            let l = match load(&file) {
                Ok(l) => l,
                Err(c) => return c,
            };
            let p = match desugar(&l) {
                Ok(p) => p,
                Err(c) => return c,
            };
            if let Err(c) = check(&l, &p) {
                return c;
            }
            let reg = match builtin_library(&p) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("cogc: {e}");
                    return ExitCode::from(1);
                }
            };
            let f = match fn_signature(&l, &p, &fname) {
                Ok(f) => f,
                Err(c) => return c,
            };
            let (arg_ty, _) = f.signature.arg_result();
            let v = match decode_arg(&arg, arg_ty) {
                Ok(v) => v,
                Err(c) => return c,
            };
            match sem {
                Semantics::Value => match apply_fn_v(&p, &reg, &fname, &[], v, fuel()) {
                    Ok(out) => {
                        println!("{}", vvalue_to_json(&out));
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("cogc: evaluation failed: {e}");
                        ExitCode::from(1)
                    }
                },
                Semantics::Update => {
                    let mut store = Store::new();
                    let u = match embed_uvalue(&v, arg_ty, &mut store) {
                        Ok(u) => u,
                        Err(e) => {
                            eprintln!("cogc: cannot embed argument: {e}");
                            return ExitCode::from(1);
                        }
                    };
                    match apply_fn_u(&p, &reg, &fname, &[], u, store, fuel()) {
                        Ok((out, store)) => {
                            println!("{}", uvalue_to_json(&out));
                            if trace {
                                println!("{}", store_to_json(&store));
                            }
                            ExitCode::SUCCESS
                        }
                        Err(e) => {
                            eprintln!("cogc: evaluation failed: {e}");
                            ExitCode::from(1)
                        }
                    }
                }
            }
        }
        Cmd::Oracle { file, fname, arg } => {
            let l = match load(&file) {
                Ok(l) => l,
                Err(c) => return c,
            };
            let p = match desugar(&l) {
                Ok(p) => p,
                Err(c) => return c,
            };
            if let Err(c) = check(&l, &p) {
                return c;
            }
            let reg = match builtin_library(&p) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("cogc: {e}");
                    return ExitCode::from(1);
                }
            };
            let f = match fn_signature(&l, &p, &fname) {
                Ok(f) => f,
                Err(c) => return c,
            };
            let (arg_ty, res_ty) = f.signature.arg_result();
            let (arg_ty, res_ty) = (arg_ty.clone(), res_ty.clone());
            let v = match decode_arg(&arg, &arg_ty) {
                Ok(v) => v,
                Err(c) => return c,
            };
            let mut store = Store::new();
            let u = match embed_uvalue(&v, &arg_ty, &mut store) {
                Ok(u) => u,
                Err(e) => {
                    eprintln!("cogc: cannot embed argument: {e}");
                    return ExitCode::from(1);
                }
            };
            let verdict = refinement_oracle(
                &p, &reg, &fname, &v, &u, &store, &arg_ty, &res_ty, fuel(),
            );
            println!("{}", verdict.to_json());
            if verdict.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Cmd::Mono { file, entries, rename_out } => {
            let l = match load(&file) {
                Ok(l) => l,
                Err(c) => return c,
            };
            let p = match desugar(&l) {
                Ok(p) => p,
                Err(c) => return c,
            };
            if let Err(c) = check(&l, &p) {
                return c;
            }
            let entries = if entries.is_empty() { None } else { Some(entries.as_slice()) };
            match monomorphise(&p, entries) {
                Ok((mono, rename)) => {
                    print!("{}", program_to_source(&mono));
                    if let Some(out) = rename_out {
                        if let Err(e) = std::fs::write(
                            &out,
                            serde_json::to_string_pretty(&rename.to_json()).unwrap(),
                        ) {
                            eprintln!("cogc: cannot write {}: {e}", out.display());
                            return ExitCode::from(3);
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(d) => fail_diag(&l, &d),
            }
        }
        Cmd::Anf { file } => {
            let l = match load(&file) {
                Ok(l) => l,
                Err(c) => return c,
            };
            let p = match desugar(&l) {
                Ok(p) => p,
                Err(c) => return c,
            };
            if let Err(c) = check(&l, &p) {
                return c;
            }
            print!("{}", program_to_source(&a_normalise(&p)));
            ExitCode::SUCCESS
        }
        Cmd::Desugar { file } => {
            let l = match load(&file) {
                Ok(l) => l,
                Err(c) => return c,
            };
            match desugar(&l) {
                Ok(p) => {
                    print!("{}", program_to_source(&p));
                    ExitCode::SUCCESS
                }
                Err(c) => c,
            }
        }
        Cmd::EmitC { file, out } => {
            let l = match load(&file) {
                Ok(l) => l,
                Err(c) => return c,
            };
            let p = match desugar(&l) {
                Ok(p) => p,
                Err(c) => return c,
            };
            if let Err(c) = check(&l, &p) {
                return c;
            }
            let (mono, _) = match monomorphise(&p, None) {
                Ok(m) => m,
                Err(d) => return fail_diag(&l, &d),
            };
            let anf = a_normalise(&mono);
            let emission = match cogc_core::codegen::emit_c(&anf) {
                Ok(e) => e,
                Err(d) => return fail_diag(&l, &d),
            };
            let stem = file
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "program".to_string());
            if let Err(e) = std::fs::create_dir_all(&out) {
                eprintln!("cogc: cannot create {}: {e}", out.display());
                return ExitCode::from(3);
            }
            let prog_c = out.join(format!("{stem}.c"));
            let driver_c = out.join(format!("{stem}_driver.c"));
            let driver_src = emission
                .driver_c
                .replace("#include \"program.c\"", &format!("#include \"{stem}.c\""));
            if let Err(e) = std::fs::write(&prog_c, &emission.program_c)
                .and_then(|_| std::fs::write(&driver_c, &driver_src))
            {
                eprintln!("cogc: cannot write output: {e}");
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Cmd::DiffC { file, fname, arg, out } => {
            let l = match load(&file) {
                Ok(l) => l,
                Err(c) => return c,
            };
            let p = match desugar(&l) {
                Ok(p) => p,
                Err(c) => return c,
            };
            if let Err(c) = check(&l, &p) {
                return c;
            }
            let f = match fn_signature(&l, &p, &fname) {
                Ok(f) => f,
                Err(c) => return c,
            };
            let (arg_ty, _) = f.signature.arg_result();
            let v = match decode_arg(&arg, arg_ty) {
                Ok(v) => v,
                Err(c) => return c,
            };
            match cogc_core::codegen::diff_run_c(&p, &fname, &[v], out.as_deref()) {
                Ok(outcome) => {
                    println!("{}", outcome.to_json());
                    if outcome.passed()
                        || matches!(outcome, cogc_core::codegen::DiffOutcome::Skipped { .. })
                    {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(d) => fail_diag(&l, &d),
            }
        }
    }
}

fn main() -> ExitCode {
    run()
}
