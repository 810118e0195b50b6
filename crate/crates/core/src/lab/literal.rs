//! Measure literals: `dirac(x0, mass)`, `dirac(x, y, mass)`,
//! `density(preset)` or `density(preset, scale)`, joined by `+`.

use crate::domain::Mesh;
use crate::error::{Error, Result};
use crate::lab::config::source_preset;
use crate::measure::DiscreteMeasure;

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Dirac { at: [f64; 2], mass: f64 },
    Density { preset: String, scale: f64 },
}

/// Splits on `+` outside parentheses.
fn split_terms(text: &str) -> Result<Vec<&str>> {
    let mut terms = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::Config(format!("unbalanced `)` in `{text}`")));
                }
            }
            '+' if depth == 0 => {
                terms.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Config(format!("unbalanced `(` in `{text}`")));
    }
    terms.push(text[start..].trim());
    if terms.iter().any(|t| t.is_empty()) {
        return Err(Error::Config(format!("empty term in `{text}`")));
    }
    Ok(terms)
}

fn parse_term(term: &str, dim: usize) -> Result<Term> {
    let open = term.find('(').ok_or_else(|| Error::Config(format!("expected `name(...)`, got `{term}`")))?;
    if !term.ends_with(')') {
        return Err(Error::Config(format!("missing `)` in `{term}`")));
    }
    let name = term[..open].trim();
    let args: Vec<&str> = term[open + 1..term.len() - 1].split(',').map(str::trim).collect();
    let number = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Config(format!("`{s}` is not a number in `{term}`")))
    };
    match name {
        "dirac" => {
            if args.len() != dim + 1 {
                return Err(Error::Config(format!("dirac takes {} arguments in {dim}D: `{term}`", dim + 1)));
            }
            let mut at = [0.0; 2];
            for (slot, a) in at.iter_mut().zip(&args[..dim]) {
                *slot = number(a)?;
            }
            Ok(Term::Dirac { at, mass: number(args[dim])? })
        }
        "density" => {
            let scale = match args.len() {
                1 => 1.0,
                2 => number(args[1])?,
                _ => return Err(Error::Config(format!("density takes a preset and an optional scale: `{term}`"))),
            };
            if args[0].is_empty() {
                return Err(Error::Config(format!("density needs a preset: `{term}`")));
            }
            Ok(Term::Density { preset: args[0].to_string(), scale })
        }
        other => Err(Error::Config(format!("unknown measure term `{other}`"))),
    }
}

pub fn parse_terms(text: &str, dim: usize) -> Result<Vec<Term>> {
    split_terms(text)?.into_iter().map(|t| parse_term(t, dim)).collect()
}

/// Builds the measure on `mesh`; densities use the source presets.
pub fn parse_measure(text: &str, mesh: &Mesh) -> Result<DiscreteMeasure> {
    let mut measure = DiscreteMeasure::zero(*mesh);
    for term in parse_terms(text, mesh.dim())? {
        let part = match term {
            Term::Dirac { at, mass } => DiscreteMeasure::dirac(*mesh, at, mass)
                .map_err(|e| Error::Config(e.to_string()))?,
            Term::Density { preset, scale } => {
                let rho = source_preset(&preset, &[scale], mesh)?;
                DiscreteMeasure::from_density(rho)?
            }
        };
        measure = measure.add(&part)?;
    }
    Ok(measure)
}
