/// Default acceptance bound on normalized edit distance.
pub const FUZZY_THRESHOLD: f64 = 0.3;
/// Window lengths searched are `len(quote) ± floor(FUZZY_BAND * len(quote))`.
pub const FUZZY_BAND: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyMatch {
    /// Character position of the window in the haystack.
    pub position: usize,
    pub window_len: usize,
    /// Raw Levenshtein distance between window and quote.
    pub distance: usize,
    /// `distance / len(quote)`.
    pub norm_dist: f64,
}

fn band(quote_len: usize) -> (usize, usize) {
    let slack = (FUZZY_BAND * quote_len as f64).floor() as usize;
    ((quote_len - slack).max(1), quote_len + slack)
}

fn within(distance: usize, quote_len: usize, max_norm_dist: f64) -> bool {
    distance as f64 <= max_norm_dist * quote_len as f64 + 1e-9
}

/// Best approximate occurrence of `quote` in `haystack`.
///
/// Every window whose length lies in the band around the quote length is
/// compared by Levenshtein distance. The smallest distance wins; ties go to
/// the smaller position, then the shorter window.
pub fn fuzzy_find(haystack: &str, quote: &str, max_norm_dist: f64) -> Option<FuzzyMatch> {
    let hay: Vec<char> = haystack.chars().collect();
    let quote: Vec<char> = quote.chars().collect();
    fuzzy_minima(&hay, &quote, max_norm_dist).map(|(best, _)| best)
}

/// Best match plus every window start attaining the same minimal distance
/// (each with its shortest minimal window), in position order.
pub(crate) fn fuzzy_minima(
    hay: &[char],
    quote: &[char],
    max_norm_dist: f64,
) -> Option<(FuzzyMatch, Vec<(usize, usize)>)> {
    if quote.is_empty() || hay.is_empty() {
        return None;
    }
    let q = quote.len();
    let (min_w, max_w) = band(q);
    if hay.len() < min_w {
        return None;
    }
    // Only distances within the threshold are interesting; prune anything above.
    let mut best: Option<usize> = None;
    let mut ties: Vec<(usize, usize)> = Vec::new();
    let mut col = vec![0usize; q + 1];
    let mut next = vec![0usize; q + 1];
    for start in 0..=hay.len() - min_w {
        for (i, c) in col.iter_mut().enumerate() {
            *c = i;
        }
        let limit = max_w.min(hay.len() - start);
        let mut local: Option<(usize, usize)> = None;
        for width in 1..=limit {
            let h = hay[start + width - 1];
            next[0] = width;
            let mut col_min = next[0];
            for i in 1..=q {
                let sub = col[i - 1] + usize::from(quote[i - 1] != h);
                let v = sub.min(col[i] + 1).min(next[i - 1] + 1);
                next[i] = v;
                col_min = col_min.min(v);
            }
            std::mem::swap(&mut col, &mut next);
            if width >= min_w {
                let d = col[q];
                if local.is_none_or(|(ld, _)| d < ld) {
                    local = Some((d, width));
                }
            }
            // Distances only grow from the column minimum onwards.
            if let Some(b) = best {
                if col_min > b && width >= min_w {
                    break;
                }
            }
        }
        let Some((d, width)) = local else { continue };
        if !within(d, q, max_norm_dist) {
            continue;
        }
        match best {
            Some(b) if d > b => {}
            Some(b) if d == b => ties.push((start, width)),
            _ => {
                best = Some(d);
                ties.clear();
                ties.push((start, width));
            }
        }
    }
    let d = best?;
    let (position, window_len) = ties[0];
    Some((
        FuzzyMatch {
            position,
            window_len,
            distance: d,
            norm_dist: d as f64 / q as f64,
        },
        ties,
    ))
}
