package com.example.shop;

import org.junit.Test;

public class Cart_isEmpty_SeedTest {

    @Test
    public void testIsEmpty() throws Throwable {
        Cart cart = new Cart((PriceCalculator) null);
        cart.isEmpty();
        // TODO: assert here
    }
}
