// The script pane model. Server-authoritative by construction: the pane
// never synthesizes statements, it only appends the exact tails mutation
// responses carry (or resets wholesale from a script response), and it
// can prove its fidelity by hashing its contents against the server's
// script hash after every interaction.

import { scriptHash } from "./hash.js";
import type {
  MutationResponse,
  ScriptResponse,
  StatementRecord,
  Suggestion,
} from "./types.js";

export class PaneDivergedError extends Error {}

export class ScriptPaneModel {
  source = "";
  statements: StatementRecord[] = [];
  lastServerHash = "";
  suggestions: Suggestion[] = [];
  private dismissed = new Map<string, string>(); // suggestion id -> script hash

  loadScript(response: ScriptResponse): void {
    this.source = response.source;
    this.statements = [...response.statements];
    this.lastServerHash = response.script_hash;
  }

  /** Append a mutation's tail; tails must continue the list contiguously. */
  applyMutation(response: MutationResponse): void {
    for (const record of response.statements) {
      if (record.index !== this.statements.length) {
        throw new PaneDivergedError(
          `tail index ${record.index} does not continue ${this.statements.length}`,
        );
      }
      this.statements.push(record);
    }
    this.lastServerHash = response.script_hash;
  }

  /** Replace the whole pane (accepted rewrites re-render the script). */
  resetFromScript(response: ScriptResponse): void {
    this.loadScript(response);
  }

  paneHash(): Promise<string> {
    return scriptHash(
      this.source,
      this.statements.map((s) => s.text),
    );
  }

  /** The thin-client proof: our text hashes to the server's hash. */
  async verify(): Promise<void> {
    const ours = await this.paneHash();
    if (ours !== this.lastServerHash) {
      throw new PaneDivergedError(
        `pane hash ${ours.slice(0, 12)} != server ${this.lastServerHash.slice(0, 12)}`,
      );
    }
  }

  /** Statement indexes born from one gesture (for hover highlighting). */
  statementsForGroup(group: number): number[] {
    const out: number[] = [];
    this.statements.forEach((s, i) => {
      if (s.gesture_group === group) out.push(i);
    });
    return out;
  }

  setSuggestions(list: Suggestion[], currentHash: string): void {
    this.suggestions = list.filter(
      (s) => this.dismissed.get(s.id) !== currentHash,
    );
  }

  /** Hide a suggestion until the script changes (hash-scoped dismissal). */
  dismiss(id: string): void {
    this.dismissed.set(id, this.lastServerHash);
    this.suggestions = this.suggestions.filter((s) => s.id !== id);
  }
}
