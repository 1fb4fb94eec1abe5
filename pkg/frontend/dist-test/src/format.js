/** Display formatting only: every number shown is an API payload value. */
export function clamp01(value) {
    if (Number.isNaN(value))
        return 0;
    return Math.min(1, Math.max(0, value));
}
export function formatValue(value, digits = 3) {
    return value.toFixed(digits);
}
export function formatPercent(value) {
    return `${(value * 100).toFixed(1)}%`;
}
/** "X1=l2|X2=l1" -> [["X1", "l2"], ["X2", "l1"]] for chip rendering. */
export function outcomeParts(description) {
    return description
        .split("|")
        .filter((part) => part.length > 0)
        .map((part) => {
        const eq = part.indexOf("=");
        return eq < 0 ? [part, ""] : [part.slice(0, eq), part.slice(eq + 1)];
    });
}
export function formatBand(mean, stddev) {
    return `${formatValue(mean)} ± ${formatValue(stddev)}`;
}
