import { describe, expect, it } from "vitest";

import { ApiError, fetchCities, fetchScene, fetchWeather } from "../src/api";
import { sampleCities, sampleScene, stubFetch } from "./helpers";

describe("api client", () => {
  it("parses the cities payload", async () => {
    stubFetch(() => ({ status: 200, body: sampleCities(2) }));
    const cities = await fetchCities();
    expect(cities).toHaveLength(2);
    expect(cities[0].name).toBe("Taipei");
  });

  it("hits the expected scene route", async () => {
    const calls = stubFetch(() => ({ status: 200, body: sampleScene() }));
    await fetchScene("Taipei", "uv");
    expect(calls).toEqual(["/scene/Taipei/uv"]);
  });

  it("URL-encodes city names", async () => {
    const calls = stubFetch(() => ({
      status: 200,
      body: { city: "New Taipei", timestamp: 1, uv_index: null, temperature_c: null, pm25_aqi: null, rainfall_mm_hr: null },
    }));
    await fetchWeather("New Taipei");
    expect(calls).toEqual(["/weather/New%20Taipei"]);
  });

  it("raises ApiError carrying the status and detail", async () => {
    stubFetch(() => ({ status: 503, body: { detail: "no observations yet" } }));
    const err = await fetchScene("Taipei", "uv").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(503);
    expect(err.message).toBe("no observations yet");
  });

  it("propagates network failure as a rejection", async () => {
    stubFetch(() => undefined);
    await expect(fetchCities()).rejects.toThrow(/fetch failed/);
  });
});
