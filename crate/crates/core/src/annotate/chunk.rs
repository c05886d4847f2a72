//! Paragraph-aligned chunking for length-limited providers.

/// Splits `body` into chunks of at most `limit` whitespace-delimited words.
///
/// Paragraphs (blank-line separated) are packed greedily; a paragraph longer
/// than `limit` is cut at word boundaries.
pub fn text_chunk(body: &str, limit: usize) -> Vec<String> {
    assert!(limit > 0, "chunk limit must be positive");
    let mut chunks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut current_len = 0usize;

    let flush = |current: &mut Vec<&str>, len: &mut usize, chunks: &mut Vec<String>| {
        if !current.is_empty() {
            chunks.push(current.join("\n\n"));
            current.clear();
            *len = 0;
        }
    };

    let paragraphs = body.split("\n\n").map(str::trim).filter(|p| !p.is_empty());
    let mut owned_pieces: Vec<String> = Vec::new();
    let mut units: Vec<(usize, bool)> = Vec::new();
    for p in paragraphs {
        let words: Vec<&str> = p.split_whitespace().collect();
        if words.len() <= limit {
            owned_pieces.push(p.to_string());
            units.push((words.len(), true));
        } else {
            for piece in words.chunks(limit) {
                owned_pieces.push(piece.join(" "));
                units.push((piece.len(), false));
            }
        }
    }
    for (piece, (len, fits)) in owned_pieces.iter().zip(units) {
        if !fits || current_len + len > limit {
            flush(&mut current, &mut current_len, &mut chunks);
        }
        current.push(piece);
        current_len += len;
        if !fits {
            flush(&mut current, &mut current_len, &mut chunks);
        }
    }
    flush(&mut current, &mut current_len, &mut chunks);
    chunks
}

/// Article-level label from chunk labels: the most frequent label, ties
/// resolved in favour of the label seen first.
pub fn aggregate_labels<L: PartialEq + Clone>(labels: &[L]) -> Option<L> {
    let mut tallies: Vec<(L, usize)> = Vec::new();
    for l in labels {
        match tallies.iter_mut().find(|(k, _)| k == l) {
            Some((_, n)) => *n += 1,
            None => tallies.push((l.clone(), 1)),
        }
    }
    let best = tallies.iter().map(|(_, n)| *n).max()?;
    tallies.into_iter().find(|(_, n)| *n == best).map(|(l, _)| l)
}
