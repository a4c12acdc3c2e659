//! Line-oriented command interpreter over an ldl session.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use ldl_core::lang::parse_atom;
use ldl_core::session::Session;
use ldl_core::Error;

pub const HELP: &str = "\
commands:
  load <file>                 load rules and facts
  schema <file>               load a schema declaration file
  query <atom>.               stream the answers of a query
  explain strata              strata of the loaded program
  explain foe|bistate|syncbi|sql <pred>
  explain plan <atom>         node network of a query form
  set <option> <value>        seed, max_steps, offload, trace, backtracking
  facts <pred>                the full relation of a predicate
  help
  quit";

/// Exit status for an error: 2 when the step limit was hit, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::StepLimit { .. } => 2,
        _ => 1,
    }
}

/// A file path as given, or under `LDL_FIXTURES` when it does not exist.
pub fn resolve(path: &str) -> PathBuf {
    let p = PathBuf::from(path);
    if p.exists() {
        return p;
    }
    match std::env::var_os("LDL_FIXTURES") {
        Some(dir) if Path::new(&dir).join(&p).exists() => Path::new(&dir).join(p),
        _ => p,
    }
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("-- 1 {word}")
    } else {
        format!("-- {n} {word}s")
    }
}

/// Outcome of one command line.
#[derive(Debug, PartialEq, Eq)]
pub enum Step {
    Continue,
    Quit,
}

pub struct Shell<'a, O: Write, E: Write> {
    pub session: &'a mut Session,
    pub out: O,
    pub err: E,
    /// Exit status of the first failed command, 0 if none failed.
    pub status: i32,
}

impl<'a, O: Write, E: Write> Shell<'a, O, E> {
    pub fn new(session: &'a mut Session, out: O, err: E) -> Self {
        Shell { session, out, err, status: 0 }
    }

    fn fail(&mut self, e: &Error) {
        let _ = writeln!(self.err, "error: {e}");
        if self.status == 0 {
            self.status = exit_code(e);
        }
    }

    fn usage(&mut self, msg: &str) {
        let _ = writeln!(self.err, "error: {msg}");
        if self.status == 0 {
            self.status = 1;
        }
    }

    fn flush_trace(&mut self) {
        for line in self.session.take_trace() {
            let _ = writeln!(self.err, "{line}");
        }
    }

    /// Run one command line.
    pub fn line(&mut self, line: &str) -> std::io::Result<Step> {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            return Ok(Step::Continue);
        }
        let (cmd, rest) = line.split_once(char::is_whitespace).map(|(c, r)| (c, r.trim())).unwrap_or((line, ""));
        let cmd = cmd.trim_end_matches('.');
        match cmd {
            "quit" | "exit" => return Ok(Step::Quit),
            "help" => writeln!(self.out, "{HELP}")?,
            "load" | "schema" if rest.is_empty() => self.usage(&format!("{cmd} needs a file name")),
            "load" => {
                if let Err(e) = self.session.load_file(resolve(rest)) {
                    self.fail(&e)
                }
            }
            "schema" => {
                if let Err(e) = self.session.schema_file(resolve(rest)) {
                    self.fail(&e)
                }
            }
            "query" | "?-" => self.query(rest)?,
            "explain" => {
                let (what, arg) = rest.split_once(char::is_whitespace).map(|(w, a)| (w, Some(a))).unwrap_or((rest, None));
                match self.session.explain(what, arg) {
                    Ok(text) => write!(self.out, "{}", if text.ends_with('\n') { text } else { text + "\n" })?,
                    Err(e) => self.fail(&e),
                }
            }
            "set" => match rest.split_whitespace().collect::<Vec<_>>()[..] {
                [name, value] => {
                    if let Err(e) = self.session.set(name, value) {
                        self.fail(&e)
                    }
                }
                _ => self.usage("usage: set <option> <value>"),
            },
            "facts" => {
                let pred = rest.trim_end_matches('.').trim();
                match self.session.facts(pred) {
                    Ok(rows) => {
                        for t in &rows {
                            writeln!(self.out, "{pred}{t}")?;
                        }
                        writeln!(self.out, "{}", plural(rows.len(), "fact"))?;
                    }
                    Err(e) => self.fail(&e),
                }
            }
            _ => self.usage(&format!("unknown command {cmd}")),
        }
        self.out.flush()?;
        Ok(Step::Continue)
    }

    fn query(&mut self, text: &str) -> std::io::Result<()> {
        let q = match parse_atom(text) {
            Ok(q) => q,
            Err(e) => {
                self.fail(&e);
                return Ok(());
            }
        };
        let answers = match self.session.query(&q) {
            Ok(a) => a,
            Err(e) => {
                self.fail(&e);
                return Ok(());
            }
        };
        let mut n = 0;
        let mut failed = None;
        for got in answers {
            match got {
                Ok(t) => {
                    n += 1;
                    if q.args.is_empty() {
                        writeln!(self.out, "{}", q.pred)?;
                    } else {
                        writeln!(self.out, "{}{t}", q.pred)?;
                    }
                    self.out.flush()?;
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        self.flush_trace();
        match failed {
            Some(e) => self.fail(&e),
            None => writeln!(self.out, "{}", plural(n, "answer"))?,
        }
        Ok(())
    }
}

/// Read commands until `quit` or end of input. Returns the exit status.
pub fn command_loop(session: &mut Session, input: impl BufRead, out: impl Write, err: impl Write, prompt: bool) -> i32 {
    let mut sh = Shell::new(session, out, err);
    let mut lines = input.lines();
    loop {
        if prompt {
            let _ = write!(sh.out, "ldl> ");
            let _ = sh.out.flush();
        }
        let Some(line) = lines.next() else { break };
        let step = match line {
            Ok(l) => sh.line(&l),
            Err(e) => Err(e),
        };
        match step {
            Ok(Step::Continue) => {}
            Ok(Step::Quit) => break,
            Err(e) => {
                let _ = writeln!(sh.err, "error: {e}");
                return 1;
            }
        }
    }
    sh.status
}

/// Load `program`, then run the commands in `queries`.
pub fn run_batch(session: &mut Session, program: &Path, queries: &Path, out: impl Write, mut err: impl Write) -> i32 {
    if let Err(e) = session.load_file(program) {
        let _ = writeln!(err, "error: {e}");
        return exit_code(&e);
    }
    let file = match std::fs::File::open(queries) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", queries.display());
            return 1;
        }
    };
    command_loop(session, std::io::BufReader::new(file), out, err, false)
}
