//! Relative path normalization shared by every source backend.

/// Returns true when `path` is a normalized relative path: non-empty,
/// '/'-separated, no leading '/', no empty, "." or ".." segments and no
/// backslashes.
pub fn is_normalized(path: &str) -> bool {
    !path.is_empty()
        && !path.contains('\\')
        && path
            .split('/')
            .all(|seg| !seg.is_empty() && seg != "." && seg != "..")
}

/// Normalize a raw '/'-separated path: strips leading slashes and rejects
/// anything that cannot be made to satisfy [`is_normalized`].
pub fn normalize(raw: &str) -> Option<String> {
    let trimmed = raw.trim_start_matches('/');
    is_normalized(trimmed).then(|| trimmed.to_string())
}

/// Basename of a normalized path.
pub fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// True if any segment of the path starts with '.'.
pub fn is_hidden(path: &str) -> bool {
    path.split('/').any(|seg| seg.starts_with('.'))
}

/// Lowercased extension of the basename, without the dot.
pub fn extension(path: &str) -> Option<String> {
    let base = basename(path);
    let (stem, ext) = base.rsplit_once('.')?;
    if stem.is_empty() || ext.is_empty() {
        return None;
    }
    Some(ext.to_ascii_lowercase())
}

/// Path without the extension of its basename.
pub fn strip_extension(path: &str) -> &str {
    let base = basename(path);
    match base.rfind('.') {
        Some(dot) if dot > 0 => &path[..path.len() - (base.len() - dot)],
        _ => path,
    }
}
