/**
 * Dataset metadata schemas: map a corpus metadata CSV onto one common
 * sample description.  Three schemas are supported:
 *
 *   covid19sounds: uid, file, symptomatic (yes/no or 1/0), age, sex, split
 *   coswara:       id, audio_path, covid_status (healthy -> 0, else 1),
 *                  a (age), g (m/f), split
 *   generic:       sample_id, path, label, age, sex, split
 *
 * Missing or unparsable metadata degrades to unknown; a missing split
 * defaults to train.
 */

import Papa from "papaparse";

import { AgeGroup, SexGroup, SplitName, ageGroupOf } from "./manifest.js";

export type DatasetName = "covid19sounds" | "coswara" | "generic";

export interface SampleMeta {
  sampleId: string;
  audioPath: string;
  label: 0 | 1;
  ageGroup: AgeGroup;
  sex: SexGroup;
  split: SplitName;
}

interface SchemaColumns {
  id: string;
  path: string;
  label: string;
  age: string;
  sex: string;
  split: string;
  mapLabel: (raw: string) => 0 | 1 | null;
}

function yesNoLabel(raw: string): 0 | 1 | null {
  const text = raw.trim().toLowerCase();
  if (text === "1" || text === "yes" || text === "true") {
    return 1;
  }
  if (text === "0" || text === "no" || text === "false") {
    return 0;
  }
  return null;
}

const SCHEMAS: Record<DatasetName, SchemaColumns> = {
  covid19sounds: {
    id: "uid", path: "file", label: "symptomatic", age: "age", sex: "sex",
    split: "split", mapLabel: yesNoLabel,
  },
  coswara: {
    id: "id", path: "audio_path", label: "covid_status", age: "a", sex: "g",
    split: "split",
    mapLabel: (raw) => {
      const text = raw.trim().toLowerCase();
      if (text === "") {
        return null;
      }
      return text === "healthy" ? 0 : 1;
    },
  },
  generic: {
    id: "sample_id", path: "path", label: "label", age: "age", sex: "sex",
    split: "split", mapLabel: yesNoLabel,
  },
};

function parseSex(raw: string | undefined): SexGroup {
  const text = (raw ?? "").trim().toLowerCase();
  if (text === "m" || text === "male") {
    return "male";
  }
  if (text === "f" || text === "female") {
    return "female";
  }
  return "unknown";
}

function parseAge(raw: string | undefined): AgeGroup {
  const text = (raw ?? "").trim();
  if (text === "") {
    return "unknown";
  }
  const age = Number(text);
  return Number.isFinite(age) ? ageGroupOf(age) : "unknown";
}

function parseSplit(raw: string | undefined): SplitName {
  const text = (raw ?? "").trim().toLowerCase();
  if (text === "validation" || text === "test") {
    return text;
  }
  return "train";
}

/**
 * Rows missing an id, path, or mappable label are invalid and reported by
 * 1-based CSV line number (header is line 1).
 */
export function parseMetadata(csvText: string, dataset: DatasetName): SampleMeta[] {
  const schema = SCHEMAS[dataset];
  const parsed = Papa.parse<Record<string, string>>(csvText, {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new Error(`metadata CSV parse error: ${first.message} (row ${first.row})`);
  }
  const seen = new Set<string>();
  const out: SampleMeta[] = [];
  parsed.data.forEach((row, index) => {
    const line = index + 2;
    const sampleId = (row[schema.id] ?? "").trim();
    const audioPath = (row[schema.path] ?? "").trim();
    if (sampleId === "" || audioPath === "") {
      throw new Error(`metadata line ${line}: missing ${schema.id} or ${schema.path}`);
    }
    if (seen.has(sampleId)) {
      throw new Error(`metadata line ${line}: duplicate sample id '${sampleId}'`);
    }
    seen.add(sampleId);
    const label = schema.mapLabel(row[schema.label] ?? "");
    if (label === null) {
      throw new Error(
        `metadata line ${line}: cannot map ${schema.label} value ` +
        `'${row[schema.label] ?? ""}' to a label`
      );
    }
    out.push({
      sampleId,
      audioPath,
      label,
      ageGroup: parseAge(row[schema.age]),
      sex: parseSex(row[schema.sex]),
      split: parseSplit(row[schema.split]),
    });
  });
  return out;
}
