use super::BusError;

/// Checks a concrete topic: nonempty levels separated by `/`, no wildcards.
pub fn validate_topic(topic: &str) -> Result<(), BusError> {
    if topic.is_empty() || topic.split('/').any(str::is_empty) {
        return Err(BusError::MalformedTopic(topic.to_string()));
    }
    if topic.contains(['+', '#']) {
        return Err(BusError::MalformedTopic(topic.to_string()));
    }
    Ok(())
}

/// Checks a subscription pattern. `+` matches one level and `#` any number of
/// trailing levels (including none); both must occupy a whole level and `#`
/// must be last.
pub fn validate_pattern(pattern: &str) -> Result<(), BusError> {
    let bad = || BusError::MalformedTopic(pattern.to_string());
    if pattern.is_empty() {
        return Err(bad());
    }
    let levels: Vec<&str> = pattern.split('/').collect();
    for (i, level) in levels.iter().enumerate() {
        match *level {
            "" => return Err(bad()),
            "#" if i + 1 != levels.len() => return Err(bad()),
            "#" | "+" => {}
            l if l.contains(['+', '#']) => return Err(bad()),
            _ => {}
        }
    }
    Ok(())
}

/// Whether `topic` matches `pattern`. Both are assumed valid.
pub fn matches(pattern: &str, topic: &str) -> bool {
    let mut p = pattern.split('/');
    let mut t = topic.split('/');
    loop {
        match (p.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(a), Some(b)) if a == b => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}
