/** Display formatting only: every number shown is an API payload value. */

export function clamp01(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(1, Math.max(0, value));
}

export function formatValue(value: number, digits = 3): string {
  return value.toFixed(digits);
}

export function formatPercent(value: number): string {
  return `${(value * 100).toFixed(1)}%`;
}

/** "X1=l2|X2=l1" -> [["X1", "l2"], ["X2", "l1"]] for chip rendering. */
export function outcomeParts(description: string): Array<[string, string]> {
  return description
    .split("|")
    .filter((part) => part.length > 0)
    .map((part) => {
      const eq = part.indexOf("=");
      return eq < 0 ? [part, ""] : [part.slice(0, eq), part.slice(eq + 1)];
    });
}

export function formatBand(mean: number, stddev: number): string {
  return `${formatValue(mean)} ± ${formatValue(stddev)}`;
}
