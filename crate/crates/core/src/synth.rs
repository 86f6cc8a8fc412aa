//! Deterministic synthetic benchmark: short Spanish-style feedback texts and
//! matching pseudo-embeddings.
//!
//! Each document has one to three clauses of the form
//! `[prefix] aspect verb adjective`. A clause carries the document's polarity
//! with probability `clause_fidelity`, otherwise another polarity, so the
//! bag of words is informative but noisy. A few case/whitespace variants of
//! earlier documents and some blank rows are appended to exercise
//! preprocessing.
//!
//! The pseudo-embedding of a document is
//! `signal * centroid[label] + text_weight * mean(token vectors) + noise + offset`,
//! where token vectors are fixed random directions keyed by token hash and
//! the per-dimension offsets are large, so unscaled use is visibly worse.

use std::io;

use crate::corpus::{document_id, normalize_text};
use crate::embedding::{DenseVector, EmbeddingTable, Pooling};
use crate::label::Label;
use crate::rng::{fnv1a64, SplitMix64};
use crate::text::tokenize;

pub const MODEL_ID: &str = "synthetic-pseudo-encoder-v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Distinct non-empty documents.
    pub n_docs: usize,
    pub seed: u64,
    /// Probability that a clause carries the document's own polarity.
    pub clause_fidelity: f64,
    pub emb_dim: usize,
    pub emb_signal: f64,
    pub emb_text_weight: f64,
    pub emb_noise: f64,
    pub emb_offset: f64,
    pub duplicate_variants: usize,
    pub blank_rows: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_docs: 300,
            seed: 20240917,
            clause_fidelity: 0.68,
            emb_dim: 32,
            emb_signal: 0.8,
            emb_text_weight: 1.0,
            emb_noise: 6.0,
            emb_offset: 25.0,
            duplicate_variants: 6,
            blank_rows: 3,
        }
    }
}

const ASPECTS: [&str; 16] = [
    "la atención",
    "el personal",
    "la enfermera",
    "el médico",
    "la cita",
    "la espera",
    "el trato",
    "la limpieza",
    "las instalaciones",
    "el servicio",
    "la recepción",
    "el diagnóstico",
    "la comunicación",
    "el precio",
    "la consulta",
    "el seguimiento",
];

const VERBS: [&str; 6] = ["fue", "es", "ha sido", "me pareció", "resultó", "estuvo"];

const POSITIVE: [&str; 10] = [
    "excelente",
    "muy amable",
    "rápida",
    "impecable",
    "maravillosa",
    "atenta",
    "profesional",
    "estupenda",
    "eficiente",
    "agradable",
];

const NEGATIVE: [&str; 10] = [
    "pésima",
    "lenta",
    "horrible",
    "desorganizada",
    "deficiente",
    "grosera",
    "terrible",
    "decepcionante",
    "sucia",
    "caótica",
];

const NEUTRAL: [&str; 10] = [
    "normal",
    "correcta",
    "aceptable",
    "regular",
    "adecuada",
    "estándar",
    "como siempre",
    "sin más",
    "suficiente",
    "habitual",
];

const PREFIXES: [&str; 6] = ["", "", "en general", "sinceramente", "la verdad", "por lo demás"];
const CONNECTORS: [&str; 4] = [" y ", " pero ", " aunque ", ", "];
const SUFFIXES: [&str; 5] = ["", "", "", " eso es todo", " saludos"];

fn adjectives(label: Label) -> &'static [&'static str] {
    match label {
        Label::Negative => &NEGATIVE,
        Label::Neutral => &NEUTRAL,
        Label::Positive => &POSITIVE,
    }
}

/// Generated corpus rows (in file order, including variants and blanks) and
/// the embedding table keyed by normalized-text id.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub rows: Vec<(String, Label)>,
    pub embeddings: EmbeddingTable,
}

fn clause(rng: &mut SplitMix64, polarity: Label) -> String {
    let prefix = *rng.choose(&PREFIXES);
    let body = format!(
        "{} {} {}",
        rng.choose(&ASPECTS),
        rng.choose(&VERBS),
        rng.choose(adjectives(polarity))
    );
    if prefix.is_empty() {
        body
    } else {
        format!("{prefix} {body}")
    }
}

fn document(rng: &mut SplitMix64, label: Label, fidelity: f64) -> String {
    let n_clauses = 1 + rng.below(3) as usize;
    let mut text = String::new();
    for c in 0..n_clauses {
        let polarity = if rng.next_f64() < fidelity {
            label
        } else {
            let others: Vec<Label> = Label::ALL.into_iter().filter(|&l| l != label).collect();
            *rng.choose(&others)
        };
        if c > 0 {
            text.push_str(rng.choose(&CONNECTORS));
        }
        text.push_str(&clause(rng, polarity));
    }
    text.push_str(rng.choose(&SUFFIXES));
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect::<String>() + ".",
        None => text,
    }
}

/// Case and whitespace variant with the same normalized text.
fn variant(rng: &mut SplitMix64, text: &str) -> String {
    let mut out = String::from("  ");
    for (i, word) in text.split(' ').enumerate() {
        if i > 0 {
            out.push_str(if rng.below(2) == 0 { " " } else { "   " });
        }
        if rng.below(2) == 0 {
            out.push_str(&word.to_uppercase());
        } else {
            out.push_str(word);
        }
    }
    out.push('\t');
    out
}

fn unit_gaussian(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.normal()).collect()
}

fn token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::stream(seed, "synth-token", fnv1a64(token.as_bytes()));
    let v = unit_gaussian(&mut rng, dim);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = SplitMix64::stream(cfg.seed, "synth-text", 0);
    let mut labels: Vec<Label> = (0..cfg.n_docs).map(|i| Label::ALL[i % 3]).collect();
    rng.shuffle(&mut labels);

    let mut rows: Vec<(String, Label)> = Vec::with_capacity(cfg.n_docs + cfg.duplicate_variants + cfg.blank_rows);
    let mut seen = std::collections::HashSet::new();
    for &label in &labels {
        // Redraw on collision so the corpus has exactly n_docs distinct texts.
        loop {
            let text = document(&mut rng, label, cfg.clause_fidelity);
            if seen.insert(normalize_text(&text)) {
                rows.push((text, label));
                break;
            }
        }
    }

    let mut extra_rng = SplitMix64::stream(cfg.seed, "synth-extra", 0);
    for _ in 0..cfg.duplicate_variants.min(cfg.n_docs) {
        let (text, label) = rows[extra_rng.below(cfg.n_docs as u64) as usize].clone();
        let pos = extra_rng.below(rows.len() as u64 + 1) as usize;
        rows.insert(pos, (variant(&mut extra_rng, &text), label));
    }
    for b in 0..cfg.blank_rows {
        let pos = extra_rng.below(rows.len() as u64 + 1) as usize;
        let blank = if b % 2 == 0 { String::new() } else { "   ".to_string() };
        rows.insert(pos, (blank, Label::ALL[b % 3]));
    }

    let mut emb_rng = SplitMix64::stream(cfg.seed, "synth-embedding", 0);
    let centroids: Vec<Vec<f64>> = (0..3).map(|_| unit_gaussian(&mut emb_rng, cfg.emb_dim)).collect();
    let offsets: Vec<f64> = (0..cfg.emb_dim).map(|_| cfg.emb_offset * emb_rng.normal()).collect();
    let mut table = EmbeddingTable::new(cfg.emb_dim, Pooling::MeanPool, MODEL_ID);
    for (text, label) in &rows {
        let norm = normalize_text(text);
        if norm.is_empty() {
            continue;
        }
        let id = document_id(&norm);
        if table.get(id).is_ok() {
            continue;
        }
        // Noise is keyed by document id so variants and reorderings agree.
        let mut noise = SplitMix64::stream(cfg.seed, "synth-noise", id);
        let tokens = tokenize(&norm, 1);
        let mut text_part = vec![0.0; cfg.emb_dim];
        for t in &tokens {
            for (a, v) in text_part.iter_mut().zip(token_vector(t, cfg.emb_dim, cfg.seed)) {
                *a += v / tokens.len().max(1) as f64;
            }
        }
        let v: Vec<f32> = (0..cfg.emb_dim)
            .map(|d| {
                (cfg.emb_signal * centroids[label.index()][d]
                    + cfg.emb_text_weight * text_part[d]
                    + cfg.emb_noise * noise.normal() / (cfg.emb_dim as f64).sqrt() * 2.0
                    + offsets[d]) as f32
            })
            .collect();
        table.insert(id, DenseVector(v)).expect("dimension fixed");
    }
    SynthCorpus { rows, embeddings: table }
}

fn label_word(label: Label) -> &'static str {
    match label {
        Label::Negative => "negativo",
        Label::Neutral => "neutro",
        Label::Positive => "positivo",
    }
}

/// Writes `text,label` CSV with Spanish label names.
pub fn write_csv<W: io::Write>(rows: &[(String, Label)], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["text", "label"])?;
    for (text, label) in rows {
        w.write_record([text.as_str(), label_word(*label)])?;
    }
    w.flush()?;
    Ok(())
}
