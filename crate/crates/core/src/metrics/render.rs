use std::fmt::Write;

use crate::env::{Area, AreaMap, Cell, Frame, ResourceState};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("frame line {line}: {message}")]
pub struct RenderError {
    pub line: usize,
    pub message: String,
}

/// Two characters per cell: `##` wall, `1 `/`2 `/`3 ` area background,
/// `b `/`y ` type-1/type-2 resource, `A `..`Z ` agent (`A*` when carrying).
pub fn render_frame_text(frame: &Frame) -> Result<String, String> {
    if frame.width < 3 || frame.height < 3 {
        return Err(format!("grid {}x{} too small", frame.width, frame.height));
    }
    let areas = AreaMap::vertical_bands(frame.width, frame.height);
    let mut cells: Vec<[char; 2]> = (0..frame.width * frame.height)
        .map(|i| {
            let c = Cell { x: i % frame.width, y: i / frame.width };
            match areas.get(c) {
                Area::Wall => ['#', '#'],
                a => [a.digit(), ' '],
            }
        })
        .collect();
    let index = |x: usize, y: usize| -> Result<usize, String> {
        if x >= frame.width || y >= frame.height {
            return Err(format!("cell ({x},{y}) outside {}x{} grid", frame.width, frame.height));
        }
        Ok(y * frame.width + x)
    };
    for r in &frame.resources {
        if r.state != ResourceState::Ground {
            continue;
        }
        let (Some(x), Some(y)) = (r.x, r.y) else {
            return Err(format!("ground resource {} has no position", r.id));
        };
        let glyph = match r.rtype {
            1 => 'b',
            2 => 'y',
            t => return Err(format!("unknown resource type {t}")),
        };
        cells[index(x, y)?] = [glyph, ' '];
    }
    for a in &frame.agents {
        if a.id >= 26 {
            return Err(format!("agent id {} has no letter", a.id));
        }
        let letter = (b'A' + a.id as u8) as char;
        cells[index(a.x, a.y)?] = [letter, if a.cargo.is_some() { '*' } else { ' ' }];
    }
    let mut out = String::new();
    for row in cells.chunks(frame.width) {
        let line: String = row.iter().flatten().collect();
        out.push_str(line.trim_end());
        out.push('\n');
    }
    Ok(out)
}

/// Renders every frame of a `frames.jsonl` body, each preceded by a
/// `step N` header and followed by a blank line.
pub fn replay_render(jsonl: &str) -> Result<String, RenderError> {
    let mut out = String::new();
    for (i, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| RenderError { line: i + 1, message };
        let frame = Frame::from_json_line(line).map_err(|e| err(e.to_string()))?;
        let grid = render_frame_text(&frame).map_err(err)?;
        let _ = writeln!(out, "step {}", frame.step);
        out.push_str(&grid);
        out.push('\n');
    }
    Ok(out)
}
