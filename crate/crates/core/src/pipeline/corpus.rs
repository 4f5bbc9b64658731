//! Synthetic before/after corpus with templated edits and guidance.

use alloc::format;
use alloc::string::{String, ToString};

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::edit::{build_example, EditError};
use crate::tokenizer::normalize_whitespace;

/// Region located by extraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extraction {
    pub e_p: String,
    pub e_n: String,
    /// Token range of `e_p` within the normalized `code_before`.
    pub span: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetRecord {
    pub id: String,
    pub code_before: String,
    pub code_after: String,
    pub guidance: String,
    pub extraction: Option<Extraction>,
}

impl DatasetRecord {
    /// Fills `extraction` from the code pair.
    pub fn extract(&self) -> Result<DatasetRecord, EditError> {
        let ex = build_example(&self.code_before, &self.code_after, &self.guidance)?;
        Ok(DatasetRecord {
            extraction: Some(Extraction {
                e_p: ex.e_p,
                e_n: ex.e_n,
                span: ex.span,
            }),
            ..self.clone()
        })
    }

    pub fn family(&self) -> Option<EditFamily> {
        EditFamily::of_id(&self.id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EditFamily {
    OperatorSwap,
    Negation,
    Rename,
    ClauseDeletion,
    IfToReturn,
    /// Comparison operator replaced by one of several others; G names which.
    CompareChange,
    /// Variable renamed to one of several names; G names which.
    AmbiguousRename,
    /// Call argument replaced by a parameter that only C reveals.
    ArgumentReplacement,
}

impl EditFamily {
    pub const ALL: [EditFamily; 8] = [
        EditFamily::OperatorSwap,
        EditFamily::Negation,
        EditFamily::Rename,
        EditFamily::ClauseDeletion,
        EditFamily::IfToReturn,
        EditFamily::CompareChange,
        EditFamily::AmbiguousRename,
        EditFamily::ArgumentReplacement,
    ];
    const UNAMBIGUOUS: [EditFamily; 5] = [
        EditFamily::OperatorSwap,
        EditFamily::Negation,
        EditFamily::Rename,
        EditFamily::ClauseDeletion,
        EditFamily::IfToReturn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EditFamily::OperatorSwap => "operator_swap",
            EditFamily::Negation => "negation",
            EditFamily::Rename => "rename",
            EditFamily::ClauseDeletion => "clause_deletion",
            EditFamily::IfToReturn => "if_to_return",
            EditFamily::CompareChange => "compare_change",
            EditFamily::AmbiguousRename => "ambiguous_rename",
            EditFamily::ArgumentReplacement => "argument_replacement",
        }
    }

    pub fn is_ambiguous(self) -> bool {
        !Self::UNAMBIGUOUS.contains(&self)
    }

    /// Generated ids look like `000042-negation`.
    pub fn of_id(id: &str) -> Option<EditFamily> {
        let (_, name) = id.split_once('-')?;
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

const FUNCTIONS: &[&str] = &["update", "check", "compute", "handle", "parse", "load", "store", "merge"];
const CALLEES: &[&str] = &["log", "send", "save", "emit", "push", "read"];
const PREDICATES: &[&str] = &["valid", "ready", "empty", "open"];
const VARS: &[&str] = &["a", "b", "c", "x", "y", "n", "m", "item", "node", "value", "size", "index"];
const LOCALS: &[&str] = &["total", "sum", "res", "acc"];
const RENAME_FROM: &[&str] = &["tmp", "cnt", "idx", "buf"];
const RENAME_TO: &[&str] = &["result", "count", "pos", "data"];
const AMBIGUOUS_FROM: &[&str] = &["old", "prev", "cur", "last"];
const AMBIGUOUS_TO: &[&str] = &["first", "next", "head", "tail", "left", "right"];
const COMPARISONS: &[&str] = &["<", ">", "==", "!="];
const EXTRA_PARAMS: &[&str] = &["limit", "offset", "key", "scale", "delta", "flag"];

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn pick_two<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> (&'a str, &'a str) {
    let i = rng.gen_range(0..pool.len());
    let j = (i + rng.gen_range(1..pool.len())) % pool.len();
    (pool[i], pool[j])
}

/// A generated edit before extraction: tokens of the before function, the
/// token range that changes, and what replaces it.
struct Draft {
    before: Vec<String>,
    span: (usize, usize),
    replacement: Vec<String>,
    guidance: String,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(ToString::to_string).collect()
}

/// A statement over the first two parameters that the edit leaves alone.
fn filler<R: Rng>(rng: &mut R, p1: &str, p2: &str) -> String {
    let local = pick(rng, LOCALS);
    match rng.gen_range(0..3) {
        0 => format!("{local} = {p1} + {p2} ;"),
        1 => format!("{local} = {p1} * 2 ;"),
        _ => format!("{} ( {p2} ) ;", pick(rng, CALLEES)),
    }
}

/// Wraps the edited statement in a function with filler before and after.
/// `edit` carries `@` where the edited fragment starts and `#` where it ends.
fn assemble<R: Rng>(rng: &mut R, name: &str, params: &[&str], edit: &str, replacement: &str, guidance: String) -> Draft {
    let (p1, p2) = (params[0], params[1]);
    let mut text = format!("fn {name} ( {} ) {{", params.join(" , "));
    for _ in 0..rng.gen_range(0..=2) {
        text.push(' ');
        text.push_str(&filler(rng, p1, p2));
    }
    text.push(' ');
    text.push_str(edit);
    if rng.gen_bool(0.5) {
        text.push(' ');
        text.push_str(&filler(rng, p1, p2));
    }
    text.push_str(&format!(" return {p1} ; }}"));
    let mut before = Vec::new();
    let (mut start, mut end) = (0, 0);
    for w in text.split_whitespace() {
        match w {
            "@" => start = before.len(),
            "#" => end = before.len(),
            _ => before.push(w.to_string()),
        }
    }
    Draft {
        before,
        span: (start, end),
        replacement: words(replacement),
        guidance,
    }
}

fn draft<R: Rng>(rng: &mut R, family: EditFamily) -> Draft {
    let name = pick(rng, FUNCTIONS);
    let (p1, p2) = pick_two(rng, VARS);
    let callee = pick(rng, CALLEES);
    match family {
        EditFamily::OperatorSwap => {
            let (from, to) = if rng.gen_bool(0.5) { ("&&", "||") } else { ("||", "&&") };
            let edit = format!("if ( {p1} @ {from} # {p2} ) {{ {callee} ( {p1} ) ; }}");
            assemble(rng, name, &[p1, p2], &edit, to, format!("use {to} instead of {from} in {name}"))
        }
        EditFamily::Negation => {
            let pred = pick(rng, PREDICATES);
            let edit = format!("if ( @ {pred} ( {p1} ) # ) {{ {callee} ( {p2} ) ; }}");
            let to = format!("! {pred} ( {p1} )");
            assemble(rng, name, &[p1, p2], &edit, &to, format!("negate the {pred} check in {name}"))
        }
        EditFamily::Rename => {
            let k = rng.gen_range(0..RENAME_FROM.len());
            let edit = format!("{callee} ( @ {} # ) ;", RENAME_FROM[k]);
            let guidance = format!("rename {} to {}", RENAME_FROM[k], RENAME_TO[k]);
            assemble(rng, name, &[p1, p2], &edit, RENAME_TO[k], guidance)
        }
        EditFamily::ClauseDeletion => {
            let op = if rng.gen_bool(0.5) { "&&" } else { "||" };
            let edit = format!("if ( @ {p1} {op} {p2} # ) {{ {callee} ( {p1} ) ; }}");
            let guidance = format!("drop the {p2} clause from the condition in {name}");
            assemble(rng, name, &[p1, p2], &edit, p1, guidance)
        }
        EditFamily::IfToReturn => {
            let op = if rng.gen_bool(0.5) { ">" } else { "<" };
            let before = format!("fn {name} ( {p1} , {p2} ) {{ if ( {p1} {op} {p2} ) {{ return 1 ; }} return 0 ; }}");
            let before = words(&before);
            let len = before.len();
            Draft {
                span: (7, len),
                before,
                replacement: words(&format!("{{ return {p1} {op} {p2} ; }}")),
                guidance: format!("return the comparison directly in {name}"),
            }
        }
        EditFamily::CompareChange => {
            let (from, to) = pick_two(rng, COMPARISONS);
            let edit = format!("if ( {p1} @ {from} # {p2} ) {{ {callee} ( {p1} ) ; }}");
            assemble(rng, name, &[p1, p2], &edit, to, format!("change {from} to {to} in {name}"))
        }
        EditFamily::AmbiguousRename => {
            let from = pick(rng, AMBIGUOUS_FROM);
            let to = pick(rng, AMBIGUOUS_TO);
            let edit = format!("{callee} ( @ {from} # ) ;");
            assemble(rng, name, &[p1, p2], &edit, to, format!("rename {from} to {to}"))
        }
        EditFamily::ArgumentReplacement => {
            let extra = pick(rng, EXTRA_PARAMS);
            let edit = format!("{callee} ( {p1} , @ {p2} # ) ;");
            let guidance = format!("replace argument {p2} in call to {callee}");
            assemble(rng, name, &[p1, p2, extra], &edit, extra, guidance)
        }
    }
}

/// Relative weights of the ambiguous families.
const AMBIGUOUS_WEIGHTS: [(EditFamily, u32); 3] = [
    (EditFamily::AmbiguousRename, 35),
    (EditFamily::CompareChange, 30),
    (EditFamily::ArgumentReplacement, 35),
];

/// `n` records; a fraction `ambiguity_rate` come from the families whose
/// `e_p` does not determine `e_n`. Each record carries the edit region it
/// was built around.
///
/// # Panics
/// If `ambiguity_rate` is outside `[0, 1]`.
pub fn generate_corpus(seed: u64, n: usize, ambiguity_rate: f64) -> Vec<DatasetRecord> {
    assert!((0.0..=1.0).contains(&ambiguity_rate), "ambiguity_rate must lie in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let family = if rng.gen_bool(ambiguity_rate) {
                let mut roll = rng.gen_range(0..100);
                let mut chosen = AMBIGUOUS_WEIGHTS[0].0;
                for (f, w) in AMBIGUOUS_WEIGHTS {
                    if roll < w {
                        chosen = f;
                        break;
                    }
                    roll -= w;
                }
                chosen
            } else {
                EditFamily::UNAMBIGUOUS[rng.gen_range(0..EditFamily::UNAMBIGUOUS.len())]
            };
            let d = draft(&mut rng, family);
            let (s, e) = d.span;
            let mut after: Vec<String> = d.before[..s].to_vec();
            after.extend(d.replacement.iter().cloned());
            after.extend_from_slice(&d.before[e..]);
            DatasetRecord {
                id: format!("{i:06}-{}", family.name()),
                code_before: d.before.join(" "),
                code_after: after.join(" "),
                guidance: d.guidance,
                extraction: Some(Extraction {
                    e_p: d.before[s..e].join(" "),
                    e_n: d.replacement.join(" "),
                    span: d.span,
                }),
            }
        })
        .collect()
}

/// Every text a vocabulary for `records` has to cover.
pub fn vocabulary_corpus(records: &[DatasetRecord]) -> Vec<String> {
    let mut out = Vec::with_capacity(records.len() * 3);
    for r in records {
        out.push(normalize_whitespace(&r.code_before));
        out.push(normalize_whitespace(&r.code_after));
        out.push(normalize_whitespace(&r.guidance));
    }
    out
}
