// Wire contract types. Field names mirror docs/service-schema.json in the
// repository root; the Python service is the source of truth.

export type CellType = "null" | "int" | "float" | "string" | "bool" | "error";

export interface CellPayload {
  type: CellType;
  value: unknown;
  display: string;
  formula: string;
  cell_id: number;
}

export interface WindowColumn {
  name: string;
  col_id: number;
  index: number;
}

export interface WindowRow {
  row_id: number;
  index: number;
}

export interface SheetWindow {
  columns: WindowColumn[];
  rows: WindowRow[];
  cells: CellPayload[][]; // row-major, aligned with columns/rows
  total_cols: number;
  total_rows: number;
  col_start: number;
  row_start: number;
  seq: number;
}

export interface StatementRecord {
  index: number;
  text: string;
  gesture_group: number | null;
}

export interface Diagnostic {
  severity: "INFO" | "WARNING" | "ERROR";
  message: string;
}

export interface ScriptResponse {
  source: string;
  statements: StatementRecord[];
  script_hash: string;
  output_hash: string;
  seq: number;
}

export interface MutationResponse {
  statements: StatementRecord[]; // the exact tail appended by this call
  script_hash: string;
  output_hash: string;
  diagnostics: Diagnostic[];
  seq: number;
}

export type SuggestionKind = "REROLL" | "FUSE" | "GENERALIZE";

export interface Suggestion {
  id: string;
  kind: SuggestionKind;
  indices: number[];
  replacement: string[];
  verified: boolean;
  evidence: Record<string, unknown>;
}

export interface SuggestionsResponse {
  suggestions: Suggestion[];
  script_hash: string;
  seq: number;
}

export interface SqlResponse {
  sql: string;
  manifest: { path: string; header: boolean; infer_types: boolean }[];
  seq: number;
}

export type RectTuple = [number, number, number, number]; // c0, r0, c1, r1

export type Gesture =
  | { kind: "edit_cell"; col: number; row: number; text: string }
  | { kind: "typecast"; region: string; type: "int" | "float" | "string" | "bool" }
  | { kind: "copy_paste"; src: RectTuple; dst: RectTuple }
  | { kind: "fill"; src: RectTuple; dst: RectTuple }
  | { kind: "cut_paste"; src: RectTuple; to: [number, number] }
  | { kind: "drag_rows"; row_ids: number[]; to_index: number }
  | { kind: "drag_columns"; names: string[]; to_index: number }
  | { kind: "insert_row"; index: number; before: boolean }
  | { kind: "insert_column"; index: number; before: boolean; name?: string }
  | { kind: "delete_rows"; row_ids: number[] }
  | { kind: "sort"; keys: { column: string; desc: boolean }[] }
  | { kind: "filter"; predicate: string };

export interface ServiceError {
  code: string;
  message: string;
}
