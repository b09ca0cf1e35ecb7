//! Visual token sequence assembly around the decoder's special tokens.
//!
//! Pooled rows are laid out left-to-right, top-to-bottom; `<im_col>` closes
//! every pooled row and `<im_start>`/`<im_end>` delimit the thumbnail and
//! tile-grid segments. Sequences print as whitespace-separated symbolic
//! names and parse back losslessly.

use std::fmt;
use thiserror::Error;

/// One symbolic token of the visual input stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisualToken {
    ImStart,
    ImEnd,
    ImCol,
    /// Pooled feature row `(crop, pooled_row, pooled_col)`; crop 0 is the
    /// thumbnail, tiles follow in row-major order.
    Patch { crop: usize, row: usize, col: usize },
}

impl fmt::Display for VisualToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VisualToken::ImStart => write!(f, "<im_start>"),
            VisualToken::ImEnd => write!(f, "<im_end>"),
            VisualToken::ImCol => write!(f, "<im_col>"),
            VisualToken::Patch { crop, row, col } => write!(f, "<patch:{crop}:{row}:{col}>"),
        }
    }
}

/// How `<im_start>`/`<im_end>` pairs wrap the crops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DelimiterStyle {
    /// One pair around the thumbnail and one around the whole tile grid.
    #[default]
    Grouped,
    /// One pair around every crop.
    PerCrop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisualSequence {
    tokens: Vec<VisualToken>,
}

impl VisualSequence {
    pub fn tokens(&self) -> &[VisualToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn patch_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t, VisualToken::Patch { .. }))
            .count()
    }

    /// Whitespace-separated symbolic names, suitable for golden files.
    pub fn to_text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Total visual tokens for `n_tiles` grid tiles plus the thumbnail.
pub fn count_visual_tokens(n_tiles: usize, per_crop: usize) -> usize {
    assert!(per_crop >= 1, "per_crop must be >= 1");
    (n_tiles + 1) * per_crop
}

fn push_crop(tokens: &mut Vec<VisualToken>, crop: usize, rows: usize, cols: usize) {
    for row in 0..rows {
        for col in 0..cols {
            tokens.push(VisualToken::Patch { crop, row, col });
        }
        tokens.push(VisualToken::ImCol);
    }
}

/// Lay out the thumbnail and `n_tiles` grid tiles with `pooled_rows x
/// pooled_cols` patch tokens per crop. With [`DelimiterStyle::Grouped`] the
/// length is `4 + (n_tiles + 1) * (pooled_rows * pooled_cols + pooled_rows)`.
pub fn assemble_sequence(
    n_tiles: usize,
    pooled_rows: usize,
    pooled_cols: usize,
    style: DelimiterStyle,
) -> VisualSequence {
    assert!(pooled_rows >= 1 && pooled_cols >= 1, "pooled dims must be >= 1");
    let per_crop = pooled_rows * (pooled_cols + 1);
    let mut tokens = Vec::with_capacity(2 * (n_tiles + 2) + (n_tiles + 1) * per_crop);
    match style {
        DelimiterStyle::Grouped => {
            tokens.push(VisualToken::ImStart);
            push_crop(&mut tokens, 0, pooled_rows, pooled_cols);
            tokens.push(VisualToken::ImEnd);
            tokens.push(VisualToken::ImStart);
            for tile in 0..n_tiles {
                push_crop(&mut tokens, tile + 1, pooled_rows, pooled_cols);
            }
            tokens.push(VisualToken::ImEnd);
        }
        DelimiterStyle::PerCrop => {
            for crop in 0..=n_tiles {
                tokens.push(VisualToken::ImStart);
                push_crop(&mut tokens, crop, pooled_rows, pooled_cols);
                tokens.push(VisualToken::ImEnd);
            }
        }
    }
    VisualSequence { tokens }
}

/// Structure recovered from a printed sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceLayout {
    pub n_tiles: usize,
    pub pooled_rows: usize,
    pub pooled_cols: usize,
    pub style: DelimiterStyle,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("unknown token {0:?} at position {1}")]
    UnknownToken(String, usize),
    #[error("structure error at token {at}: {reason}")]
    Structure { at: usize, reason: String },
}

fn parse_token(word: &str, at: usize) -> Result<VisualToken, SequenceError> {
    match word {
        "<im_start>" => return Ok(VisualToken::ImStart),
        "<im_end>" => return Ok(VisualToken::ImEnd),
        "<im_col>" => return Ok(VisualToken::ImCol),
        _ => {}
    }
    let inner = word
        .strip_prefix("<patch:")
        .and_then(|rest| rest.strip_suffix('>'))
        .ok_or_else(|| SequenceError::UnknownToken(word.to_string(), at))?;
    let mut parts = inner.split(':');
    let mut next = || -> Result<usize, SequenceError> {
        parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| SequenceError::UnknownToken(word.to_string(), at))
    };
    let (crop, row, col) = (next()?, next()?, next()?);
    if parts.next().is_some() {
        return Err(SequenceError::UnknownToken(word.to_string(), at));
    }
    Ok(VisualToken::Patch { crop, row, col })
}

/// Parse a printed sequence back into its layout, validating delimiter
/// nesting, row structure, and crop numbering.
pub fn parse_sequence(text: &str) -> Result<SequenceLayout, SequenceError> {
    let tokens: Vec<VisualToken> = text
        .split_whitespace()
        .enumerate()
        .map(|(at, w)| parse_token(w, at))
        .collect::<Result<_, _>>()?;

    // Split into <im_start> ... <im_end> segments.
    let mut segments: Vec<Vec<VisualToken>> = Vec::new();
    let mut current: Option<Vec<VisualToken>> = None;
    for (at, tok) in tokens.iter().enumerate() {
        match tok {
            VisualToken::ImStart => {
                if current.is_some() {
                    return Err(SequenceError::Structure {
                        at,
                        reason: "nested <im_start>".into(),
                    });
                }
                current = Some(Vec::new());
            }
            VisualToken::ImEnd => match current.take() {
                Some(seg) => segments.push(seg),
                None => {
                    return Err(SequenceError::Structure {
                        at,
                        reason: "unmatched <im_end>".into(),
                    })
                }
            },
            other => match &mut current {
                Some(seg) => seg.push(*other),
                None => {
                    return Err(SequenceError::Structure {
                        at,
                        reason: "token outside <im_start>/<im_end>".into(),
                    })
                }
            },
        }
    }
    if current.is_some() {
        return Err(SequenceError::Structure {
            at: tokens.len(),
            reason: "unterminated <im_start>".into(),
        });
    }
    if segments.is_empty() {
        return Err(SequenceError::Structure { at: 0, reason: "no segments".into() });
    }

    // Validate each crop inside each segment and recover pooled dimensions.
    let mut dims: Option<(usize, usize)> = None;
    let mut expected_crop = 0usize;
    for seg in &segments {
        let mut i = 0;
        while i < seg.len() {
            // One crop: rows of patches, each closed by <im_col>.
            let mut rows = 0usize;
            let mut cols = None;
            loop {
                let mut row_cols = 0usize;
                while let Some(VisualToken::Patch { crop, row, col }) = seg.get(i) {
                    if *crop != expected_crop || *row != rows || *col != row_cols {
                        return Err(SequenceError::Structure {
                            at: i,
                            reason: format!(
                                "patch ({crop},{row},{col}) out of order, expected ({expected_crop},{rows},{row_cols})"
                            ),
                        });
                    }
                    row_cols += 1;
                    i += 1;
                }
                if row_cols == 0 {
                    break;
                }
                match seg.get(i) {
                    Some(VisualToken::ImCol) => i += 1,
                    _ => {
                        return Err(SequenceError::Structure {
                            at: i,
                            reason: "pooled row not closed by <im_col>".into(),
                        })
                    }
                }
                if let Some(c) = cols {
                    if c != row_cols {
                        return Err(SequenceError::Structure {
                            at: i,
                            reason: "ragged pooled rows".into(),
                        });
                    }
                } else {
                    cols = Some(row_cols);
                }
                rows += 1;
                // Crop ends when the next token starts a new crop or the
                // segment is exhausted.
                match seg.get(i) {
                    Some(VisualToken::Patch { crop, .. }) if *crop != expected_crop => break,
                    None => break,
                    _ => {}
                }
            }
            if rows == 0 {
                return Err(SequenceError::Structure {
                    at: i,
                    reason: "crop without patch rows".into(),
                });
            }
            let this = (rows, cols.unwrap());
            if let Some(d) = dims {
                if d != this {
                    return Err(SequenceError::Structure {
                        at: i,
                        reason: "crops disagree on pooled dimensions".into(),
                    });
                }
            } else {
                dims = Some(this);
            }
            expected_crop += 1;
        }
    }
    let (pooled_rows, pooled_cols) = dims.ok_or(SequenceError::Structure {
        at: 0,
        reason: "no patch tokens".into(),
    })?;
    let total_crops = expected_crop;
    if total_crops == 0 {
        return Err(SequenceError::Structure { at: 0, reason: "no crops".into() });
    }

    let style = if segments.len() == 2 {
        DelimiterStyle::Grouped
    } else if segments.len() == total_crops {
        DelimiterStyle::PerCrop
    } else {
        return Err(SequenceError::Structure {
            at: 0,
            reason: format!("{} segments for {total_crops} crops", segments.len()),
        });
    };

    Ok(SequenceLayout {
        n_tiles: total_crops - 1,
        pooled_rows,
        pooled_cols,
        style,
    })
}
