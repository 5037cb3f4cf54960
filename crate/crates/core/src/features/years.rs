use std::collections::BTreeMap;

use super::FeatureError;

/// Span, distinct years, largest gap between consecutive distinct years,
/// and the gap between the two most frequent years (more recent wins ties).
pub fn features_years(years: &[i32]) -> Result<[f64; 4], FeatureError> {
    if years.is_empty() {
        return Err(FeatureError::NoYears);
    }
    let mut hist: BTreeMap<i32, usize> = BTreeMap::new();
    for &y in years {
        *hist.entry(y).or_default() += 1;
    }
    let distinct: Vec<i32> = hist.keys().copied().collect();
    let span = distinct[distinct.len() - 1] - distinct[0];
    let largest_gap = distinct.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);

    let mut modes: Vec<(i32, usize)> = hist.into_iter().collect();
    modes.sort_by(|a, b| b.1.cmp(&a.1).then(b.0.cmp(&a.0)));
    let mode_gap = match modes.as_slice() {
        [first, second, ..] => (first.0 - second.0).abs(),
        _ => 0,
    };
    Ok([
        f64::from(span),
        distinct.len() as f64,
        f64::from(largest_gap),
        f64::from(mode_gap),
    ])
}
