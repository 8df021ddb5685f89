import { describe, expect, it } from "vitest";

import { formatAge, formatAmount, formatRisk, queueCountLabel, severityClass } from "../src/format.js";

describe("formatting", () => {
  it("formats amounts with two decimals and separators", () => {
    expect(formatAmount(1234567.5)).toBe("1,234,567.50");
    expect(formatAmount(0)).toBe("0.00");
  });

  it("renders missing risk scores as a dash", () => {
    expect(formatRisk(null)).toBe("–");
    expect(formatRisk(0.9126)).toBe("0.913");
  });

  it("buckets queue age into compact units", () => {
    const now = 1_000_000_000;
    expect(formatAge(now - 5_000, now)).toBe("5s");
    expect(formatAge(now - 90_000, now)).toBe("1m");
    expect(formatAge(now - 7_200_000, now)).toBe("2h");
    expect(formatAge(now - 200_000_000, now)).toBe("2d");
    expect(formatAge(now + 50, now)).toBe("0s");
  });

  it("maps severity to css classes", () => {
    expect(severityClass("high")).toBe("sev-high");
    expect(severityClass("warning")).toBe("sev-warning");
    expect(severityClass("info")).toBe("sev-info");
  });

  it("pluralizes the pending counter", () => {
    expect(queueCountLabel(0)).toBe("0 pending");
    expect(queueCountLabel(1)).toBe("1 pending");
    expect(queueCountLabel(7)).toBe("7 pending");
  });
});
