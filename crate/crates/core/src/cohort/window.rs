use super::record::{ObsValue, Observation};
use super::registry::Window;

/// Picks the observation of `feature_name` inside `window` closest to the
/// visit. Equidistant observations resolve to the pre-visit one.
pub fn select_windowed<'a>(
    observations: &'a [Observation],
    feature_name: &str,
    window: Window,
) -> Option<&'a Observation> {
    debug_assert!(window.lo <= window.hi);
    observations
        .iter()
        .filter(|o| o.name == feature_name && window.contains(o.offset_days))
        // (|offset|, offset) orders ties toward the negative offset
        .min_by_key(|o| (o.offset_days.unsigned_abs(), o.offset_days))
}

pub fn select_windowed_value<'a>(
    observations: &'a [Observation],
    feature_name: &str,
    window: Window,
) -> Option<&'a ObsValue> {
    select_windowed(observations, feature_name, window).map(|o| &o.value)
}
