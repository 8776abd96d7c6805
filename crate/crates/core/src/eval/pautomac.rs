//! Reading and writing the PAutomaC text formats.
//!
//! String files start with `<num_strings> <alphabet_size>`; each following
//! line is `<len> <sym_1> ... <sym_len>`. Solution files start with the
//! number of probabilities, followed by one probability per line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{Alphabet, Trace};

/// Training strings, test strings and their true probabilities.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub name: String,
    pub alphabet: Alphabet,
    pub train: Vec<Trace>,
    pub test: Vec<Trace>,
    /// True probabilities of `test`, normalized to sum to one.
    pub solution: Vec<f64>,
}

/// Raw contents of a string file before the alphabet is fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StringFile {
    pub alphabet_size: u32,
    pub strings: Vec<Vec<u32>>,
}

impl StringFile {
    /// Smallest alphabet covering both the header and every symbol.
    pub fn inferred_alphabet(&self) -> u32 {
        let max_sym = self.strings.iter().flatten().map(|&s| s + 1).max().unwrap_or(0);
        self.alphabet_size.max(max_sym)
    }

    pub fn traces(&self, alphabet: Alphabet) -> Result<Vec<Trace>> {
        self.strings
            .iter()
            .map(|s| Trace::new(alphabet, s.iter().copied()))
            .collect()
    }
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn numbers<T: std::str::FromStr>(path: &str, line_no: usize, line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| parse_err(path, line_no, format!("expected a number, found `{tok}`")))
        })
        .collect()
}

/// Parses a string file. `path` is only used in error messages.
pub fn parse_strings(text: &str, path: &str) -> Result<StringFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let header: Vec<u64> = numbers(path, hline + 1, header)?;
    let [count, alphabet_size] = header[..] else {
        return Err(parse_err(path, hline + 1, "header must be `<num_strings> <alphabet_size>`"));
    };
    let alphabet_size = u32::try_from(alphabet_size)
        .map_err(|_| parse_err(path, hline + 1, "alphabet size too large"))?;
    let mut strings = Vec::with_capacity(count.min(1 << 24) as usize);
    for (i, line) in lines {
        let nums: Vec<u32> = numbers(path, i + 1, line)?;
        let (&len, syms) = nums
            .split_first()
            .expect("blank lines were filtered");
        if syms.len() != len as usize {
            return Err(parse_err(
                path,
                i + 1,
                format!("length field says {len} but {} symbols follow", syms.len()),
            ));
        }
        strings.push(syms.to_vec());
    }
    if strings.len() as u64 != count {
        return Err(parse_err(
            path,
            hline + 1,
            format!("header announces {count} strings, found {}", strings.len()),
        ));
    }
    Ok(StringFile {
        alphabet_size,
        strings,
    })
}

/// Parses a solution file; the probabilities are returned as written.
pub fn parse_solution(text: &str, path: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let count: usize = header
        .trim()
        .parse()
        .map_err(|_| parse_err(path, hline + 1, "header must be the number of probabilities"))?;
    let mut probs = Vec::with_capacity(count.min(1 << 24));
    for (i, line) in lines {
        let p: f64 = line
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("expected a probability, found `{line}`")))?;
        if !(p.is_finite() && p >= 0.0) {
            return Err(parse_err(path, i + 1, format!("invalid probability {p}")));
        }
        probs.push(p);
    }
    if probs.len() != count {
        return Err(parse_err(
            path,
            hline + 1,
            format!("header announces {count} probabilities, found {}", probs.len()),
        ));
    }
    Ok(probs)
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

/// Loads a scenario from its three files.
pub fn parse_pautomac(train: &Path, test: &Path, solution: &Path) -> Result<ScenarioBundle> {
    let train_file = parse_strings(&read(train)?, &train.display().to_string())?;
    let test_file = parse_strings(&read(test)?, &test.display().to_string())?;
    let solution_path = solution.display().to_string();
    let probs = parse_solution(&read(solution)?, &solution_path)?;
    let name = train
        .file_name()
        .and_then(|f| f.to_str())
        .and_then(|f| f.split('.').next())
        .unwrap_or("scenario")
        .to_string();
    bundle(name, train_file, test_file, probs)
}

/// Assembles a bundle, checking alignment and normalizing the solution.
pub fn bundle(
    name: String,
    train: StringFile,
    test: StringFile,
    solution: Vec<f64>,
) -> Result<ScenarioBundle> {
    if solution.len() != test.strings.len() {
        return Err(Error::Alignment(format!(
            "{} test strings but {} solution probabilities",
            test.strings.len(),
            solution.len()
        )));
    }
    let sum: f64 = solution.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Alignment("solution probabilities sum to zero".into()));
    }
    let alphabet = Alphabet::new(train.inferred_alphabet().max(test.inferred_alphabet()));
    Ok(ScenarioBundle {
        name,
        alphabet,
        train: train.traces(alphabet)?,
        test: test.traces(alphabet)?,
        solution: solution.iter().map(|p| p / sum).collect(),
    })
}

/// Renders traces in the string-file format.
pub fn write_strings(alphabet: Alphabet, traces: &[Trace]) -> String {
    let mut out = format!("{} {}\n", traces.len(), alphabet.size());
    for t in traces {
        let body = t.body();
        write!(out, "{}", body.len()).unwrap();
        for s in body {
            write!(out, " {}", s.0).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_solution(probs: &[f64]) -> String {
    let mut out = format!("{}\n", probs.len());
    for p in probs {
        writeln!(out, "{p:e}").unwrap();
    }
    out
}

/// File names used by the competition for scenario `name`.
pub fn scenario_paths(dir: &Path, name: &str) -> [PathBuf; 3] {
    [
        dir.join(format!("{name}.pautomac.train")),
        dir.join(format!("{name}.pautomac.test")),
        dir.join(format!("{name}.pautomac_solution.txt")),
    ]
}

/// Writes `bundle` into `dir` using the competition file names.
pub fn write_scenario(dir: &Path, bundle: &ScenarioBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    let [train, test, solution] = scenario_paths(dir, &bundle.name);
    fs::write(train, write_strings(bundle.alphabet, &bundle.train))?;
    fs::write(test, write_strings(bundle.alphabet, &bundle.test))?;
    fs::write(solution, write_solution(&bundle.solution))?;
    Ok(())
}

pub fn load_scenario(dir: &Path, name: &str) -> Result<ScenarioBundle> {
    let [train, test, solution] = scenario_paths(dir, name);
    parse_pautomac(&train, &test, &solution)
}

/// Names of all complete scenarios in `dir`, numerically sorted where possible.
pub fn discover_scenarios(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let file = entry?.file_name();
        let Some(name) = file.to_str().and_then(|f| f.strip_suffix(".pautomac.train")) else {
            continue;
        };
        if scenario_paths(dir, name).iter().all(|p| p.is_file()) {
            names.push(name.to_string());
        }
    }
    names.sort_by(|a, b| match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    });
    Ok(names)
}
