//! SVG rendering of explanation documents.
//!
//! Gridworlds draw one board with cells filled by meta-state and circles on
//! strategic states, largest for the priority state. Pacman boards draw one
//! strip per meta-state: sample members followed by the strategic states on
//! a pink background.

use std::fmt::Write as _;

use ssx_core::env::{EnvModel, GridState, Pos, Status};
use ssx_core::{Error, Result};

use crate::pipeline::ExplanationDoc;

/// Meta-state fills, cycled when there are more meta-states.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub const PACMAN: &str = "#00FF00";
pub const GHOST: &str = "#FF0000";
pub const EDIBLE_GHOST: &str = "#FFFF00";
pub const PILL: &str = "#00FFFF";
pub const FOOD: &str = "#0000FF";
pub const EMPTY: &str = "#000000";
pub const WALL: &str = "#FFFFFF";
pub const STRATEGIC: &str = "#FFC0CB";

const GRID_CELL: f64 = 32.0;
const PAC_CELL: f64 = 12.0;
const BANNER: f64 = 28.0;
/// Member boards shown before the strategic states in each strip.
const SAMPLES: usize = 4;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_explanation(doc: &ExplanationDoc, env: &EnvModel) -> Result<String> {
    let states: Vec<GridState> = doc
        .states
        .iter()
        .map(|s| env.decode(s).map_err(|_| Error::Render(format!("cannot decode state {s:?}"))))
        .collect::<Result<_>>()?;
    if doc.partition.assignment.len() != states.len() {
        return Err(Error::Render(format!(
            "{} assignments for {} states",
            doc.partition.assignment.len(),
            states.len()
        )));
    }
    for m in &doc.meta_states {
        if m.id >= doc.partition.k {
            return Err(Error::Render(format!("meta-state {} out of range", m.id)));
        }
        if let Some(s) = m.strategic.iter().find(|s| s.state >= states.len()) {
            return Err(Error::Render(format!("strategic state {} out of range", s.state)));
        }
    }
    Ok(if env.is_minipac() { pacman(doc, env, &states) } else { gridworld(doc, env, &states) })
}

/// Warning lines for meta-states without a count-based pick.
fn warnings(doc: &ExplanationDoc) -> Vec<String> {
    doc.meta_states
        .iter()
        .filter_map(|m| {
            if m.strategic.is_empty() {
                Some(format!("meta-state {} has no strategic state", m.id))
            } else if m.degenerate {
                Some(format!("meta-state {} has no out-paths; its pick is the lowest-index member", m.id))
            } else {
                None
            }
        })
        .collect()
}

fn banner(out: &mut String, lines: &[String], width: f64) {
    for (i, line) in lines.iter().enumerate() {
        let y = i as f64 * BANNER;
        writeln!(out, r##"<rect class="banner" x="0" y="{y}" width="{width}" height="{BANNER}" fill="#fff3cd" stroke="#856404"/>"##)
            .unwrap();
        writeln!(
            out,
            r##"<text x="8" y="{}" font-family="sans-serif" font-size="13" fill="#856404">warning: {}</text>"##,
            y + 18.0,
            escape(line)
        )
        .unwrap();
    }
}

fn gridworld(doc: &ExplanationDoc, env: &EnvModel, states: &[GridState]) -> String {
    let layout = env.layout();
    let notes = warnings(doc);
    let top = notes.len() as f64 * BANNER;
    let width = layout.cols() as f64 * GRID_CELL;
    let height = top + layout.rows() as f64 * GRID_CELL;
    let mut meta_of = vec![None; layout.rows() * layout.cols()];
    for (s, &m) in states.iter().zip(&doc.partition.assignment) {
        meta_of[layout.offset(s.agent)] = Some(m);
    }
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#).unwrap();
    banner(&mut out, &notes, width);
    let at = |p: Pos| (p.col as f64 * GRID_CELL, top + p.row as f64 * GRID_CELL);
    for p in layout.cells() {
        let (x, y) = at(p);
        let (class, fill) = match (layout.is_wall(p), meta_of[layout.offset(p)]) {
            (true, _) => ("wall".to_string(), "#202020"),
            (false, Some(m)) => (format!("cell meta-{m}"), PALETTE[m % PALETTE.len()]),
            (false, None) => ("cell unexplained".to_string(), "#ffffff"),
        };
        writeln!(
            out,
            r##"<rect class="{class}" x="{x}" y="{y}" width="{GRID_CELL}" height="{GRID_CELL}" fill="{fill}" stroke="#ffffff" stroke-width="1"/>"##
        )
        .unwrap();
    }
    for &g in env.goal_cells() {
        let (x, y) = at(g);
        let (a, b) = (GRID_CELL * 0.2, GRID_CELL * 0.8);
        writeln!(
            out,
            r##"<path class="goal" d="M{} {} L{} {} M{} {} L{} {}" stroke="#000000" stroke-width="3"/>"##,
            x + a,
            y + a,
            x + b,
            y + b,
            x + b,
            y + a,
            x + a,
            y + b
        )
        .unwrap();
    }
    for m in &doc.meta_states {
        for (rank, s) in m.strategic.iter().enumerate() {
            let (x, y) = at(states[s.state].agent);
            let r = GRID_CELL * (0.42 - 0.1 * rank.min(2) as f64);
            writeln!(
                out,
                r##"<circle class="strategic rank-{rank}" cx="{}" cy="{}" r="{r:.2}" fill="#000000" stroke="#ffffff" stroke-width="2"/>"##,
                x + GRID_CELL / 2.0,
                y + GRID_CELL / 2.0
            )
            .unwrap();
        }
    }
    writeln!(out, "</svg>").unwrap();
    out
}

/// Member boards shown for `meta`: evenly spaced over its members in index
/// order, skipping strategic states.
fn samples(doc: &ExplanationDoc, meta: usize, skip: &[usize]) -> Vec<usize> {
    let members: Vec<usize> = doc
        .partition
        .assignment
        .iter()
        .enumerate()
        .filter(|&(s, &m)| m == meta && !skip.contains(&s))
        .map(|(s, _)| s)
        .collect();
    if members.len() <= SAMPLES {
        return members;
    }
    (0..SAMPLES).map(|i| members[i * (members.len() - 1) / (SAMPLES - 1)]).collect()
}

fn board(out: &mut String, env: &EnvModel, s: &GridState, x0: f64, y0: f64, strategic: bool) {
    let layout = env.layout();
    let (w, h) = (layout.cols() as f64 * PAC_CELL, layout.rows() as f64 * PAC_CELL);
    let (class, background) = if strategic { ("panel strategic", STRATEGIC) } else { ("panel", WALL) };
    writeln!(out, r#"<rect class="{class}" x="{x0}" y="{y0}" width="{w}" height="{h}" fill="{background}"/>"#).unwrap();
    let cell = |out: &mut String, p: Pos, fill: &str| {
        let (x, y) = (x0 + p.col as f64 * PAC_CELL, y0 + p.row as f64 * PAC_CELL);
        writeln!(out, r#"<rect x="{x}" y="{y}" width="{PAC_CELL}" height="{PAC_CELL}" fill="{fill}"/>"#).unwrap();
    };
    for p in layout.open_cells() {
        let fill = if s.pill && env.pill_cell() == Some(p) {
            PILL
        } else if s.has_food(layout.offset(p)) {
            FOOD
        } else {
            EMPTY
        };
        cell(out, p, fill);
    }
    let disc = |out: &mut String, p: Pos, fill: &str, scale: f64| {
        writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}"/>"#,
            x0 + (p.col as f64 + 0.5) * PAC_CELL,
            y0 + (p.row as f64 + 0.5) * PAC_CELL,
            PAC_CELL * scale
        )
        .unwrap();
    };
    if let Some(g) = s.ghost {
        if s.status != Status::GhostEaten {
            disc(out, g.pos, if s.edible > 0 { EDIBLE_GHOST } else { GHOST }, 0.5);
        }
    }
    disc(out, s.agent, PACMAN, if s.ghost.is_some_and(|g| g.pos == s.agent) { 0.3 } else { 0.45 });
}

fn pacman(doc: &ExplanationDoc, env: &EnvModel, states: &[GridState]) -> String {
    let layout = env.layout();
    let notes = warnings(doc);
    let (bw, bh) = (layout.cols() as f64 * PAC_CELL, layout.rows() as f64 * PAC_CELL);
    let gap = 8.0;
    let label = 20.0;
    let strips: Vec<(usize, Vec<usize>, Vec<usize>)> = doc
        .meta_states
        .iter()
        .map(|m| {
            let picks: Vec<usize> = m.strategic.iter().map(|s| s.state).collect();
            (m.id, samples(doc, m.id, &picks), picks)
        })
        .collect();
    let panels = strips.iter().map(|(_, a, b)| a.len() + b.len()).max().unwrap_or(0).max(1);
    let top = notes.len() as f64 * BANNER;
    let width = gap + panels as f64 * (bw + gap);
    let height = top + strips.len() as f64 * (label + bh + gap) + gap;
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#).unwrap();
    writeln!(out, r##"<rect width="{width}" height="{height}" fill="#f0f0f0"/>"##).unwrap();
    banner(&mut out, &notes, width);
    for (row, (id, members, picks)) in strips.iter().enumerate() {
        let y = top + row as f64 * (label + bh + gap) + gap;
        let size = doc.partition.assignment.iter().filter(|&&m| m == *id).count();
        writeln!(
            out,
            r##"<text x="{gap}" y="{}" font-family="sans-serif" font-size="12" fill="#000000">meta-state {id} ({size} states)</text>"##,
            y + 14.0
        )
        .unwrap();
        for (i, &s) in members.iter().chain(picks).enumerate() {
            let x = gap + i as f64 * (bw + gap);
            board(&mut out, env, &states[s], x, y + label, i >= members.len());
        }
    }
    writeln!(out, "</svg>").unwrap();
    out
}
