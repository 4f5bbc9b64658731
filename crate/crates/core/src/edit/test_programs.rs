//! Random MiniLang functions for property tests.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

const NAMES: [&str; 6] = ["a", "b", "x", "y", "count", "total"];
const CALLEES: [&str; 3] = ["log", "check", "get"];
const BINOPS: [&str; 10] = ["+", "-", "*", "/", "&&", "||", "==", "!=", "<", ">"];

pub(crate) fn random_program<R: Rng>(rng: &mut R) -> String {
    let n_params = rng.gen_range(0..3);
    let params: Vec<&str> = NAMES[..n_params].to_vec();
    let body = block(rng, 2);
    format!("fn f ( {} ) {body}", params.join(" , ")).replace("(  )", "( )")
}

fn block<R: Rng>(rng: &mut R, depth: usize) -> String {
    let n = rng.gen_range(0..4);
    let stmts: Vec<String> = (0..n).map(|_| statement(rng, depth)).collect();
    if stmts.is_empty() {
        "{ }".into()
    } else {
        format!("{{ {} }}", stmts.join(" "))
    }
}

fn statement<R: Rng>(rng: &mut R, depth: usize) -> String {
    match rng.gen_range(0..if depth > 0 { 5 } else { 3 }) {
        0 => format!("{} = {} ;", pick(rng, &NAMES), expr(rng, 2)),
        1 => {
            if rng.gen_bool(0.2) {
                "return ;".into()
            } else {
                format!("return {} ;", expr(rng, 2))
            }
        }
        2 => format!("{} ;", call(rng, 1)),
        3 => format!("if ( {} ) {}", expr(rng, 2), block(rng, depth - 1)),
        _ => format!("if ( {} ) {} else {}", expr(rng, 2), block(rng, depth - 1), block(rng, depth - 1)),
    }
}

fn expr<R: Rng>(rng: &mut R, depth: usize) -> String {
    let leaf = depth == 0 || rng.gen_bool(0.35);
    if leaf {
        return if rng.gen_bool(0.7) {
            pick(rng, &NAMES).into()
        } else {
            format!("{}", rng.gen_range(0..10))
        };
    }
    match rng.gen_range(0..4) {
        0 => format!("! {}", expr(rng, depth - 1)),
        1 => format!("( {} )", expr(rng, depth - 1)),
        2 => call(rng, depth - 1),
        _ => format!("{} {} {}", expr(rng, depth - 1), pick(rng, &BINOPS), expr(rng, depth - 1)),
    }
}

fn call<R: Rng>(rng: &mut R, depth: usize) -> String {
    let n = rng.gen_range(0..3);
    let args: Vec<String> = (0..n).map(|_| expr(rng, depth)).collect();
    if args.is_empty() {
        format!("{} ( )", pick(rng, &CALLEES))
    } else {
        format!("{} ( {} )", pick(rng, &CALLEES), args.join(" , "))
    }
}

fn pick<'a, R: Rng>(rng: &mut R, from: &[&'a str]) -> &'a str {
    from[rng.gen_range(0..from.len())]
}
