/**
 * Manifest emission: one compact JSON line per sample, with metadata coded
 * into the screening core's enums.  Raw ages never leave this module; they
 * are bucketed here.
 */

export type AgeGroup = "le39" | "40to59" | "ge60" | "unknown";
export type SexGroup = "male" | "female" | "unknown";
export type SplitName = "train" | "validation" | "test";

export function ageGroupOf(age: number | null): AgeGroup {
  if (age === null || !Number.isFinite(age) || age < 0) {
    return "unknown";
  }
  if (age <= 39) {
    return "le39";
  }
  if (age <= 59) {
    return "40to59";
  }
  return "ge60";
}

export interface ManifestRecord {
  sampleId: string;
  label: 0 | 1;
  ageGroup: AgeGroup;
  sex: SexGroup;
  split: SplitName;
  /** "<layer>/<channel>" -> path relative to the manifest's directory. */
  features: Record<string, string>;
}

export function manifestLine(record: ManifestRecord): string {
  const features: Record<string, string> = {};
  for (const key of Object.keys(record.features).sort()) {
    features[key] = record.features[key];
  }
  return JSON.stringify({
    sample_id: record.sampleId,
    label: record.label,
    age_group: record.ageGroup,
    sex: record.sex,
    split: record.split,
    features,
  });
}

export function manifestText(records: ManifestRecord[]): string {
  return records.map(manifestLine).join("\n") + (records.length > 0 ? "\n" : "");
}
