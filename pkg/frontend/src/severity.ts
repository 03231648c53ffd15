// Severity grade display: ordinals 0-4 map to the exact strings the service
// uses; anything else renders defensively as "Unknown".

export const SEVERITY_LABELS = [
  "No_DR",
  "Mild",
  "Moderate",
  "Severe",
  "Proliferate_DR",
] as const;

export type KnownSeverityLabel = (typeof SEVERITY_LABELS)[number];
export type SeverityLabel = KnownSeverityLabel | "Unknown";

const HIGH_RISK_THRESHOLD = 3; // Severe and Proliferate_DR get the alert styling

export function severityLabel(
  ordinal: number,
  log: (message: string) => void = (m) => console.warn(m),
): SeverityLabel {
  if (Number.isInteger(ordinal) && ordinal >= 0 && ordinal < SEVERITY_LABELS.length) {
    return SEVERITY_LABELS[ordinal];
  }
  log(`severity ordinal out of range: ${ordinal}`);
  return "Unknown";
}

export function isHighRisk(label: string): boolean {
  const idx = (SEVERITY_LABELS as readonly string[]).indexOf(label);
  return idx >= HIGH_RISK_THRESHOLD;
}

/** CSS class carrying the visual treatment for a rendered grade. */
export function severityClass(label: string): string {
  return isHighRisk(label) ? "severity severity-high" : "severity";
}
