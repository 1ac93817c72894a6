import { describe, expect, it } from "vitest";

import { canonicalScriptText, scriptHash, sha256Hex } from "../src/hash.js";

describe("script hashing", () => {
  it("joins the source and statements with ;-terminated lines", () => {
    expect(canonicalScriptText("LOAD 'x.csv'", ["ADD COLUMN a"])).toBe(
      "LOAD 'x.csv';\nADD COLUMN a;",
    );
    expect(canonicalScriptText("LOAD 'x.csv'", [])).toBe("LOAD 'x.csv';");
  });

  it("matches the server's hash for a known script", async () => {
    // sha256 of "LOAD 'people.csv';\nADD COLUMN C;" computed independently
    expect(await scriptHash("LOAD 'people.csv'", ["ADD COLUMN C"])).toBe(
      "f6493e67ce47c86f8280b84f1e055e9941af6f1c3935ded0de8093f5d7448f02",
    );
  });

  it("hex-encodes digests", async () => {
    // sha256 of the empty string is a well-known constant
    expect(await sha256Hex("")).toBe(
      "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
    );
  });
});
